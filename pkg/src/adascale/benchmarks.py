"""Synthetic test functions evaluated through the normalized domain ``[0, 1]^D``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import OutOfDomain
from .gp import PriorSampleObjective, sample_prior_objective
from .numerics import BoxBounds

__all__ = [
    "BENCHMARK_NAMES",
    "Benchmark",
    "evaluate",
    "make_benchmark",
    "michalewicz",
    "rastrigin",
    "schwefel",
    "sphere",
    "to_native",
]

MICHALEWICZ_M = 10


def to_native(z, bounds: BoxBounds) -> np.ndarray:
    """Affine map ``a + (b - a) * z`` from the unit cube to native bounds.

    Raises
    ------
    OutOfDomain
        If any coordinate of ``z`` lies outside ``[0, 1]``.
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != bounds.dim:
        raise ValueError(f"expected {bounds.dim} coordinates, got {z.shape[-1]}")
    if not np.all((z >= 0.0) & (z <= 1.0)):
        raise OutOfDomain("point lies outside the unit hypercube")
    return bounds.lower + bounds.width * z


def schwefel(x) -> float:
    x = np.asarray(x, dtype=float)
    return 418.9829 * x.shape[-1] - float(np.sum(x * np.sin(np.sqrt(np.abs(x)))))


def rastrigin(x) -> float:
    x = np.asarray(x, dtype=float)
    return 10.0 * x.shape[-1] + float(np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x)))


def michalewicz(x, m: int = MICHALEWICZ_M) -> float:
    x = np.asarray(x, dtype=float)
    i = np.arange(1, x.shape[-1] + 1)
    return -float(np.sum(np.sin(x) * np.sin(i * x * x / np.pi) ** (2 * m)))


def sphere(x) -> float:
    """``||x - 0.5||^2``; a smoke-test function, not one of the published benchmarks."""
    x = np.asarray(x, dtype=float)
    return float(np.sum((x - 0.5) ** 2))


_NATIVE = {
    "Schwefel": (-500.0, 500.0),
    "Rastrigin": (-5.12, 5.12),
    "Michalewicz": (0.0, math.pi),
    "GpPriorSample": (0.0, 1.0),
    "Sphere": (0.0, 1.0),
}
BENCHMARK_NAMES = tuple(_NATIVE)


@dataclass(frozen=True)
class Benchmark:
    """Named objective with its native box; call it with points in ``[0, 1]^D``.

    ``params`` holds ``m`` for Michalewicz and ``lengthscale``/``seed``
    (optionally ``n_features``) for GP prior samples.
    """

    name: str
    D: int
    params: dict = field(default_factory=dict)
    native_bounds: BoxBounds = field(init=False)
    _sample: PriorSampleObjective | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.name not in _NATIVE:
            raise ValueError(f"unknown benchmark {self.name!r}; choose from {', '.join(BENCHMARK_NAMES)}")
        if self.D < 1:
            raise ValueError("D must be at least 1")
        lo, hi = _NATIVE[self.name]
        object.__setattr__(self, "native_bounds", BoxBounds(np.full(self.D, lo), np.full(self.D, hi)))
        if self.name == "GpPriorSample":
            sample = sample_prior_objective(
                self.D,
                float(self.params.get("lengthscale", 0.1)),
                int(self.params.get("n_features", 2048)),
                int(self.params.get("seed", 0)),
            )
            object.__setattr__(self, "_sample", sample)

    def __call__(self, z) -> float:
        return evaluate(self, z)


def evaluate(bench: Benchmark, z) -> float:
    """Value of ``bench`` at the normalized point ``z``."""
    x = to_native(z, bench.native_bounds)
    if x.ndim != 1:
        raise ValueError("evaluate takes a single point")
    if bench.name == "Schwefel":
        return schwefel(x)
    if bench.name == "Rastrigin":
        return rastrigin(x)
    if bench.name == "Michalewicz":
        return michalewicz(x, int(bench.params.get("m", MICHALEWICZ_M)))
    if bench.name == "GpPriorSample":
        return float(bench._sample(x))
    return sphere(x)


def make_benchmark(name: str, D: int, **params) -> Benchmark:
    return Benchmark(name, D, params)
