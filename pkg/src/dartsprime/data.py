"""Synthetic classification datasets standing in for image benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_blobs, make_moons

DATASET_KINDS = ("moons", "blobs", "spirals")


@dataclass
class DatasetSpec:
    kind: str = "moons"
    size: int = 2000
    test_size: int = 1000
    noise: float = 0.2
    classes: int = 2
    seed: int = 101

    def validate(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.size < 4:
            raise ValueError("dataset size must be >= 4")
        if self.test_size < 1:
            raise ValueError("test_size must be >= 1")
        if self.classes < 2:
            raise ValueError("classes must be >= 2")
        if self.kind == "moons" and self.classes != 2:
            raise ValueError("moons has exactly two classes")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


@dataclass
class Dataset:
    x: np.ndarray  # search / training pool
    y: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    classes: int

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return len(self.y)


def _spirals(n: int, classes: int, noise: float, rng: np.random.Generator):
    y = np.arange(n) % classes
    rng.shuffle(y)
    t = rng.uniform(0.0, 1.0, size=n)
    radius = 0.2 + 0.8 * t
    angle = 2.0 * np.pi * (1.5 * t + y / classes)
    x = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    return x + noise * rng.standard_normal(x.shape), y


def generate_dataset(spec: DatasetSpec) -> Dataset:
    """Sample ``size + test_size`` points and standardize with pool statistics."""
    spec.validate()
    n = spec.size + spec.test_size
    rng = np.random.default_rng(spec.seed)
    sub_seed = int(rng.integers(2**31 - 1))
    if spec.kind == "moons":
        x, y = make_moons(n_samples=n, noise=spec.noise, random_state=sub_seed)
    elif spec.kind == "blobs":
        x, y = make_blobs(n_samples=n, centers=spec.classes, cluster_std=max(spec.noise, 1e-3),
                          random_state=sub_seed)
    else:
        x, y = _spirals(n, spec.classes, spec.noise, rng)
    perm = rng.permutation(n)
    x, y = np.asarray(x, dtype=np.float64)[perm], np.asarray(y, dtype=np.int64)[perm]
    x_pool, x_test = x[: spec.size], x[spec.size:]
    mu, sd = x_pool.mean(axis=0), x_pool.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return Dataset((x_pool - mu) / sd, y[: spec.size], (x_test - mu) / sd, y[spec.size:],
                   spec.classes)
