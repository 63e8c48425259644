"""Information gain diagnostics and numerical checks of the scaling results."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gp import KernelParams, gram
from .numerics import cholesky_logdet, sobol_sequence

__all__ = [
    "CSV_COLUMNS",
    "MigCurve",
    "expected_distance_bounds",
    "independent_ig",
    "information_gain",
    "mc_expected_distance",
    "scaling_invariance_details",
    "sobol_mig_curve",
    "verify_scaling_invariance",
]

CSV_COLUMNS = ("D", "L", "lengthscale", "noise_variance", "N", "ig_nats", "ig_independent_nats")
_MC_CHUNK = 50_000


def information_gain(K, noise_variance: float) -> float:
    """``0.5 * log det(I + K / noise_variance)`` in nats."""
    K = np.asarray(K, dtype=float)
    if noise_variance <= 0:
        raise ValueError("noise_variance must be positive")
    n = K.shape[0]
    if n == 0:
        return 0.0
    return 0.5 * cholesky_logdet(np.eye(n) + K / noise_variance).log_det


def independent_ig(N: int, noise_variance: float) -> float:
    """Information gain of ``N`` points under an identity Gram matrix."""
    if N < 0:
        raise ValueError("N must be non-negative")
    if noise_variance <= 0:
        raise ValueError("noise_variance must be positive")
    return 0.5 * N * math.log1p(1.0 / noise_variance)


@dataclass(frozen=True)
class MigCurve:
    D: int
    L: float
    lengthscale: float
    noise_variance: float
    points: tuple

    def rows(self):
        """CSV rows in :data:`CSV_COLUMNS` order."""
        for n, ig in self.points:
            yield (
                self.D,
                self.L,
                self.lengthscale,
                self.noise_variance,
                n,
                ig,
                independent_ig(n, self.noise_variance),
            )


def sobol_mig_curve(
    D: int,
    L: float,
    lengthscale: float,
    noise_variance: float,
    N_grid,
    seed: int = 0,
    scramble: bool = False,
) -> MigCurve:
    """Information gain of the first ``N`` Sobol points in ``[0, L]^D`` for each ``N``.

    Every prefix design shares one Cholesky factor: the log determinant of
    a leading principal block is the partial sum of the factor's log
    diagonal. ``seed`` only matters when ``scramble`` is set.
    """
    if not 0 < L <= 1:
        raise ValueError("L must lie in (0, 1]")
    grid = sorted({int(n) for n in N_grid})
    if not grid or grid[0] < 0:
        raise ValueError("N_grid must hold non-negative sizes")
    n_max = grid[-1]
    points = []
    if n_max == 0:
        return MigCurve(D, L, lengthscale, noise_variance, tuple((0, 0.0) for _ in grid))
    X = L * sobol_sequence(n_max, D, seed=seed, scramble=scramble)
    K = gram(X, KernelParams.isotropic(D, lengthscale))
    chol = cholesky_logdet(np.eye(n_max) + K / noise_variance)
    cum = np.concatenate([[0.0], np.cumsum(np.log(np.diagonal(chol.lower)))])
    for n in grid:
        points.append((n, float(cum[n])))
    return MigCurve(D, float(L), float(lengthscale), float(noise_variance), tuple(points))


def expected_distance_bounds(D: int, L: float) -> tuple[float, float]:
    """Bounds on the mean distance between two uniform points in ``[0, L]^D``."""
    if D < 1:
        raise ValueError("D must be at least 1")
    if L <= 0:
        raise ValueError("L must be positive")
    root_d = math.sqrt(D)
    lower = L / 3.0 * root_d
    upper = L / math.sqrt(6.0) * root_d * math.sqrt((1.0 + 2.0 * math.sqrt(1.0 - 3.0 / (5.0 * D))) / 3.0)
    return lower, upper


def mc_expected_distance(D: int, L: float, n_pairs: int, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo mean distance of uniform pairs in ``[0, L]^D`` and its standard error."""
    if n_pairs < 1000:
        raise ValueError("n_pairs must be at least 1000")
    rng = np.random.default_rng(seed)
    total = total_sq = 0.0
    done = 0
    while done < n_pairs:
        m = min(_MC_CHUNK, n_pairs - done)
        diff = rng.uniform(size=(m, D)) - rng.uniform(size=(m, D))
        dist = L * np.sqrt(np.einsum("ij,ij->i", diff, diff))
        total += float(dist.sum())
        total_sq += float(dist @ dist)
        done += m
    mean = total / n_pairs
    var = max(total_sq - n_pairs * mean * mean, 0.0) / (n_pairs - 1)
    return mean, math.sqrt(var / n_pairs)


def scaling_invariance_details(
    D: int,
    L: float,
    N: int,
    c: float,
    seed: int = 0,
    noise_variance: float = 0.01,
    mismatched: bool = False,
) -> tuple[float, float, float]:
    """Compare the global Gram matrix with its trust-region rescaled counterpart.

    The global kernel uses ``lengthscale = c sqrt(D)`` on a Sobol design
    ``X``; the local one uses ``c L sqrt(D)`` on ``L X`` (or the unscaled
    ``c sqrt(D)`` when ``mismatched``). Returns the max absolute Gram
    difference and the two information gains.
    """
    if not 0 < L <= 1:
        raise ValueError("L must lie in (0, 1]")
    if N < 2:
        raise ValueError("N must be at least 2")
    X = sobol_sequence(N, D, seed=seed)
    ell = c * math.sqrt(D)
    K = gram(X, KernelParams.isotropic(D, ell))
    local_ell = ell if mismatched else c * L * math.sqrt(D)
    K_local = gram(L * X, KernelParams.isotropic(D, local_ell))
    diff = float(np.max(np.abs(K - K_local)))
    return diff, information_gain(K, noise_variance), information_gain(K_local, noise_variance)


def verify_scaling_invariance(
    D: int, L: float, N: int, c: float, seed: int = 0, mismatched: bool = False
) -> float:
    """Max absolute difference between the global and rescaled local Gram matrices."""
    return scaling_invariance_details(D, L, N, c, seed, mismatched=mismatched)[0]
