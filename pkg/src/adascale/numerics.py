"""Dense linear algebra, Sobol points, a bounded local minimizer and
standard-normal log-densities used throughout the package."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg, optimize, special
from scipy.stats import qmc

from .exceptions import DimensionUnsupported, NonFiniteObjective, NotPositiveDefinite

__all__ = [
    "BoxBounds",
    "CholFactor",
    "MAX_SOBOL_DIM",
    "bounded_minimize",
    "cholesky_logdet",
    "sobol_sequence",
    "std_normal_logs",
]

DEFAULT_JITTER = 1e-6
MAX_JITTER = 1e-2
# Size of the Joe-Kuo table shipped with scipy.
MAX_SOBOL_DIM = 21201
SOBOL_BITS = 30
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CholFactor:
    """Lower Cholesky factor of ``A + jitter_used * I``.

    Attributes
    ----------
    lower : ndarray, shape (N, N)
    log_det : float
        ``log|A + jitter_used * I|`` in nats.
    jitter_used : float
    """

    lower: np.ndarray
    log_det: float
    jitter_used: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``(A + jitter I) x = b``."""
        return linalg.cho_solve((self.lower, True), b, check_finite=False)

    def solve_lower(self, b: np.ndarray) -> np.ndarray:
        """Solve ``L x = b`` for the lower factor only."""
        return linalg.solve_triangular(self.lower, b, lower=True, check_finite=False)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.n))


@dataclass(frozen=True)
class BoxBounds:
    """Axis-aligned box ``lower <= x <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "BoxBounds":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def scale(self, unit_points: np.ndarray) -> np.ndarray:
        """Map points from ``[0, 1]^D`` into this box."""
        return self.lower + self.width * unit_points


def _jitter_schedule(base_jitter: float, max_jitter: float):
    yield base_jitter
    j = base_jitter if base_jitter > 0 else DEFAULT_JITTER
    if base_jitter > 0:
        j *= 10.0
    # the 1.0001 slack keeps 1e-2 reachable despite float products
    while j <= max_jitter * 1.0001:
        yield j
        j *= 10.0


def cholesky_logdet(
    A: np.ndarray, base_jitter: float = 0.0, max_jitter: float = MAX_JITTER
) -> CholFactor:
    """Cholesky factor of a symmetric matrix with escalating diagonal jitter.

    The jitter sequence is ``base_jitter, 10*base_jitter, ...`` up to
    ``max_jitter``; a zero base jitter falls back to ``1e-6`` after the
    first failed attempt.

    Raises
    ------
    NotPositiveDefinite
        If no jitter in the schedule yields a factorization.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if base_jitter < 0:
        raise ValueError("base_jitter must be non-negative")
    n = A.shape[0]
    if n == 0:
        return CholFactor(np.zeros((0, 0)), 0.0, float(base_jitter))
    eye = np.eye(n)
    for jitter in _jitter_schedule(float(base_jitter), max_jitter):
        try:
            lower = np.linalg.cholesky(A + jitter * eye if jitter else A)
        except np.linalg.LinAlgError:
            continue
        diag = np.diagonal(lower)
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            continue
        return CholFactor(lower, float(2.0 * np.sum(np.log(diag))), float(jitter))
    raise NotPositiveDefinite(
        f"matrix of size {n} not positive definite with jitter up to {max_jitter:g}"
    )


def sobol_sequence(n: int, d: int, seed: int = 0, scramble: bool = True) -> np.ndarray:
    """First ``n`` points of a ``d``-dimensional Sobol sequence.

    Unscrambled output is the canonical Joe-Kuo construction starting at the
    origin. Scrambling applies a seeded random digital shift (XOR on the
    30-bit integer coordinates), which preserves the net structure.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if d < 1:
        raise ValueError("d must be at least 1")
    if d > MAX_SOBOL_DIM:
        raise DimensionUnsupported(f"Sobol table covers d <= {MAX_SOBOL_DIM}, got {d}")
    if n == 0:
        return np.empty((0, d))
    engine = qmc.Sobol(d, scramble=False, bits=SOBOL_BITS)
    with warnings.catch_warnings():
        # balance warning for non power-of-two n
        warnings.simplefilter("ignore", UserWarning)
        points = engine.random(n)
    if not scramble:
        return points
    scale = float(1 << SOBOL_BITS)
    ints = np.rint(points * scale).astype(np.uint64)
    shift = np.random.default_rng(seed).integers(
        0, 1 << SOBOL_BITS, size=d, dtype=np.uint64
    )
    return (ints ^ shift).astype(float) / scale


def std_normal_logs(z):
    """Log-density and log-CDF of the standard normal at ``z``.

    Works elementwise on arrays; scalars in, scalars out.
    """
    z = np.asarray(z, dtype=float)
    log_pdf = -0.5 * z * z - LOG_SQRT_2PI
    log_cdf = special.log_ndtr(z)
    if z.ndim == 0:
        return float(log_pdf), float(log_cdf)
    return log_pdf, log_cdf


def _fd_gradient(f: Callable, x: np.ndarray, bounds: BoxBounds) -> np.ndarray:
    # central differences, one-sided where a bound is active
    g = np.empty_like(x)
    for i in range(x.size):
        h = 1e-6 * (1.0 + abs(x[i]))
        hi = min(x[i] + h, bounds.upper[i])
        lo = max(x[i] - h, bounds.lower[i])
        if hi == lo:
            g[i] = 0.0
            continue
        xp = x.copy()
        xm = x.copy()
        xp[i] = hi
        xm[i] = lo
        g[i] = (f(xp) - f(xm)) / (hi - lo)
    return g


def bounded_minimize(
    f: Callable,
    grad,
    bounds: BoxBounds,
    x0,
    max_iter: int = 200,
    tol: float = 1e-8,
    ftol: float = 1e-15,
):
    """Minimize a smooth function over a box with L-BFGS-B (memory 10).

    Parameters
    ----------
    f : callable
        Objective ``f(x) -> float``. If ``grad is True`` it must return
        ``(value, gradient)`` instead.
    grad : callable, True or None
        Gradient callback, ``True`` for a combined objective, or ``None``
        for the central finite-difference fallback.
    bounds : BoxBounds
    x0 : array_like
        Start point; must lie inside ``bounds``.
    max_iter : int
    tol : float
        Projected-gradient tolerance.

    Returns
    -------
    x_min : ndarray
    f_min : float
        Never larger than ``f(x0)``.

    Raises
    ------
    NonFiniteObjective
        If the objective evaluates to NaN or infinity at any queried point.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != bounds.lower.shape:
        raise ValueError(f"x0 has shape {x0.shape}, bounds have {bounds.lower.shape}")
    if not bounds.contains(x0):
        raise ValueError("x0 lies outside the bounds")

    def checked(value, x):
        value = float(value)
        if not math.isfinite(value):
            raise NonFiniteObjective(f"objective returned {value} at x={x!r}")
        return value

    if grad is True:

        def fun(x):
            x = bounds.clip(x)
            value, g = f(x)
            g = np.asarray(g, dtype=float)
            if not np.all(np.isfinite(g)):
                raise NonFiniteObjective(f"gradient not finite at x={x!r}")
            return checked(value, x), g

    else:
        scalar = lambda x: checked(f(x), x)  # noqa: E731
        if grad is None:
            gradient = lambda x: _fd_gradient(scalar, x, bounds)  # noqa: E731
        else:
            gradient = lambda x: np.asarray(grad(x), dtype=float)  # noqa: E731

        def fun(x):
            x = bounds.clip(x)
            return scalar(x), gradient(x)

    f0, _ = fun(x0)
    result = optimize.minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(bounds.lower, bounds.upper)),
        options={"maxcor": 10, "maxiter": max_iter, "gtol": tol, "ftol": ftol},
    )
    x_min = bounds.clip(result.x)
    f_min = float(result.fun)
    if not f_min <= f0:
        return x0, f0
    return x_min, f_min
