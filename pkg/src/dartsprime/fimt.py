"""Architecture-update schedules, including the Fisher-trace driven one.

The dynamic schedule tracks an exponentially weighted moving average of the
empirical Fisher information trace (sum of squared weight gradients) and
fires an architecture step whenever that average drops below an adaptive
threshold ``h``. A fire shrinks ``h`` by ``h_dec = h_inc ** -r``; a miss grows
it by ``h_inc``. Under a stationary trace the walk settles into ``r`` misses
per fire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

SCHEDULE_KINDS = ("alternating", "constant", "dynamic_fimt")


@dataclass
class SchedulerConfig:
    kind: str = "dynamic_fimt"
    k: int = 10  # period of the constant schedule
    h0: float = 1.0
    h_inc: float = 1.05
    r: float = 10.0
    lam: float = 0.2

    def validate(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "constant" and self.k < 1:
            raise ValueError("constant schedule needs k >= 1")
        if self.h0 <= 0:
            raise ValueError("h0 must be positive")
        if self.h_inc < 1:
            raise ValueError("h_inc must be >= 1")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if not 0 < self.lam <= 1:
            raise ValueError("lam must lie in (0, 1]")

    @property
    def step_ratio(self) -> float:
        """Expected weight steps per architecture step, used for the data split."""
        if self.kind == "alternating":
            return 1.0
        if self.kind == "constant":
            return float(self.k)
        return float(self.r)


def threshold_decrease(h_inc: float, r: float) -> float:
    return math.exp(-r * math.log(h_inc))


@dataclass
class FimtState:
    h: float
    h_dec: float
    ewma: Optional[float] = None
    n: int = 0
    w_steps: int = 0
    alpha_steps: int = 0

    @classmethod
    def initial(cls, config: SchedulerConfig) -> "FimtState":
        return cls(h=config.h0, h_dec=threshold_decrease(config.h_inc, config.r))


def fimt_trace(grads) -> float:
    """Trace of G G^T for the flattened gradient G, i.e. its squared norm."""
    total = 0.0
    for g in grads:
        g = np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise ValueError("gradient contains NaN or Inf")
        total += float(np.dot(g.ravel(), g.ravel()))
    return total


def ewma_update(state: FimtState, trace: float, lam: float) -> float:
    """Fold one trace into the running average. The first observation seeds it."""
    if not 0 < lam <= 1:
        raise ValueError("lam must lie in (0, 1]")
    state.ewma = trace if state.ewma is None else lam * trace + (1.0 - lam) * state.ewma
    state.n += 1
    return state.ewma


def should_update_alpha(state: FimtState, h_inc: float) -> bool:
    """Compare the running average with the threshold and adapt the threshold."""
    state.w_steps += 1
    if state.ewma < state.h:
        state.h *= state.h_dec
        state.alpha_steps += 1
        return True
    state.h *= h_inc
    return False


def schedule_decision(config: SchedulerConfig, state: Optional[FimtState], step: int) -> bool:
    """Whether an architecture step follows weight step number ``step`` (0-based)."""
    if config.kind == "alternating":
        return True
    if config.kind == "constant":
        return step % config.k == config.k - 1
    return should_update_alpha(state, config.h_inc)


def simulate(config: SchedulerConfig, ewma_stream) -> list:
    """Drive the dynamic rule with a given sequence of averaged traces.

    Returns one ``(ewma, h_before, fired)`` tuple per step.
    """
    state = FimtState.initial(config)
    out = []
    for value in ewma_stream:
        state.ewma = float(value)
        h = state.h
        out.append((state.ewma, h, should_update_alpha(state, config.h_inc)))
    return out
