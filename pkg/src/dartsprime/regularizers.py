"""Pull architecture weights towards the discrete set.

Both penalties act on activated weights and are chained back to the raw
weights through the activation. The projection is held constant when
differentiating: it is piecewise constant, so its derivative vanishes
almost everywhere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from dartsprime.discretization import project_cell
from dartsprime.search_space import CellLayout, activation_of, activation_vjp

log = logging.getLogger(__name__)


@dataclass
class ProximityConfig:
    rho: float = 0.1
    squared: bool = False
    kink_eps: float = 1e-12

    def validate(self) -> None:
        if self.rho < 0:
            raise ValueError("rho must be >= 0")


def ramp_c(index: float, horizon: float) -> float:
    """Linear ramp from 0 at ``index = 0`` to 1 at ``index = horizon``."""
    if horizon <= 0:
        raise ValueError("ramp horizon must be positive")
    if index < 0:
        raise ValueError("ramp index must be >= 0")
    if index > horizon:
        log.warning("ramp index %s beyond horizon %s, clamping to 1", index, horizon)
        return 1.0
    return index / horizon


def _residuals(activated: dict, layout: CellLayout) -> dict:
    return {c: np.asarray(a) - project_cell(a, layout) for c, a in activated.items()}


def proximity_penalty(activated: dict, c: float, config: ProximityConfig, layout: CellLayout) -> float:
    """``(c * rho / 2) * ||a - proj(a)||``, squared norm if configured."""
    if c == 0 or config.rho == 0:
        return 0.0
    sq = sum(float(np.sum(d * d)) for d in _residuals(activated, layout).values())
    norm = sq if config.squared else math.sqrt(sq)
    return 0.5 * c * config.rho * norm


def proximity_grad_activated(activated: dict, c: float, config: ProximityConfig,
                             layout: CellLayout) -> dict:
    d = _residuals(activated, layout)
    if c == 0 or config.rho == 0:
        return {k: np.zeros_like(v) for k, v in d.items()}
    scale = 0.5 * c * config.rho
    if config.squared:
        return {k: 2.0 * scale * v for k, v in d.items()}
    norm = math.sqrt(sum(float(np.sum(v * v)) for v in d.values()))
    if norm < config.kink_eps:
        return {k: np.zeros_like(v) for k, v in d.items()}
    return {k: scale * v / norm for k, v in d.items()}


def proximity_grad(raw: dict, c: float, config: ProximityConfig, layout: CellLayout,
                   mode: str, mask: Optional[dict] = None) -> dict:
    """Gradient of the proximity penalty with respect to the raw weights."""
    m = mask or {}
    activated = {k: activation_of(v, mode, m.get(k)) for k, v in raw.items()}
    up = proximity_grad_activated(activated, c, config, layout)
    return {k: activation_vjp(raw[k], mode, up[k], m.get(k)) for k in raw}


@dataclass
class AdmmConfig:
    rho: float = 0.1
    decay: float = 0.8
    period: int = 10

    def validate(self) -> None:
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if not 0 <= self.decay <= 1:
            raise ValueError("decay must lie in [0, 1]")
        if self.period < 1:
            raise ValueError("period must be >= 1")


@dataclass
class AdmmState:
    config: AdmmConfig
    z: dict
    u: dict
    updates: int = 0

    @classmethod
    def initial(cls, activated: dict, layout: CellLayout, config: AdmmConfig) -> "AdmmState":
        z = {k: project_cell(a, layout).astype(np.float64) for k, a in activated.items()}
        u = {k: np.zeros_like(np.asarray(a, dtype=np.float64)) for k, a in activated.items()}
        return cls(config, z, u)


def admm_penalty(raw: dict, state: AdmmState, mode: str, mask: Optional[dict] = None):
    """``(rho/2) * ||a - z + u||^2`` and its gradient with respect to the raw weights."""
    m = mask or {}
    rho = state.config.rho
    value = 0.0
    grad = {}
    for k, r in raw.items():
        a = activation_of(r, mode, m.get(k))
        resid = a - state.z[k] + state.u[k]
        value += 0.5 * rho * float(np.sum(resid * resid))
        grad[k] = activation_vjp(r, mode, rho * resid, m.get(k))
    return value, grad


def admm_update_zu(state: AdmmState, activated: dict, layout: CellLayout) -> AdmmState:
    """``z <- proj(a + u)``; ``u <- decay * u + a - z``."""
    lam = state.config.decay
    for k, a in activated.items():
        a = np.asarray(a, dtype=np.float64)
        z = project_cell(a + state.u[k], layout).astype(np.float64)
        state.u[k] = lam * state.u[k] + a - z
        state.z[k] = z
    state.updates += 1
    return state
