"""Optimizers and the cosine learning-rate schedule used by the search loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from dartsprime.autodiff import ShapeError, Tensor


def cosine_lr(step: int, lr_max: float, lr_min: float, horizon: int) -> float:
    """Cosine annealing from ``lr_max`` at step 0 to ``lr_min`` at ``horizon``."""
    if step < 0 or step > horizon:
        raise ValueError(f"cosine_lr: step {step} outside [0, {horizon}]")
    if horizon == 0:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / horizon))


def _grads_for(params: Sequence[Tensor], grads) -> list:
    if grads is None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    grads = list(grads)
    if len(grads) != len(params):
        raise ShapeError(f"{len(grads)} gradients for {len(params)} parameters")
    for p, g in zip(params, grads):
        if np.shape(g) != p.shape:
            raise ShapeError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
    return grads


@dataclass
class SGD:
    """SGD with heavy-ball momentum: ``v <- mu*v + g``; ``p <- p - lr*v``.

    Weight decay is added to the gradient before the momentum update.
    """

    params: list
    lr: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    step_count: int = 0
    buffers: list = field(default_factory=list)

    def __post_init__(self):
        self.params = list(self.params)
        if not self.buffers:
            self.buffers = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: Optional[Sequence[np.ndarray]] = None) -> None:
        grads = _grads_for(self.params, grads)
        for p, v, g in zip(self.params, self.buffers, grads):
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data -= self.lr * v
        self.step_count += 1

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class Adam:
    """Bias-corrected Adam with L2-style weight decay folded into the gradient."""

    params: list
    lr: float
    betas: tuple = (0.5, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        self.params = list(self.params)
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: Optional[Sequence[np.ndarray]] = None) -> None:
        grads = _grads_for(self.params, grads)
        b1, b2 = self.betas
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
