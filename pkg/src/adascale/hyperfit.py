"""Lengthscale priors and GP hyperparameter fitting (MAP and box-constrained MLE)."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FitFailed, InvalidTrustRegion, NonFiniteObjective, NotPositiveDefinite
from .gp import NOISE_FLOOR, KernelParams, log_marginal_likelihood
from .numerics import BoxBounds, bounded_minimize

__all__ = [
    "FitConfig",
    "FitMode",
    "LengthscalePrior",
    "LogNormal",
    "PriorKind",
    "fit",
    "make_prior",
    "neg_map_objective",
]

log = logging.getLogger(__name__)

BASE_LOC = math.sqrt(2.0)
BASE_SCALE = math.sqrt(3.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# Safety box for MAP in log space, far outside any prior mass that matters.
MAP_LOG_LENGTHSCALE_RANGE = (-10.0, 10.0)
MAP_NOISE_RANGE = (NOISE_FLOOR, 1.0)


class PriorKind(str, enum.Enum):
    ADASCALE = "adascale"
    DSCALED = "dscaled"
    NONE = "none"


class FitMode(str, enum.Enum):
    MLE = "mle"
    MAP = "map"


@dataclass(frozen=True)
class LogNormal:
    """Scalar LogNormal with location and scale on the log axis."""

    loc: float
    scale: float

    def neg_log_pdf(self, log_x):
        """``-log p(x)`` and its derivative with respect to ``log x``."""
        z = (log_x - self.loc) / self.scale
        value = log_x + math.log(self.scale) + LOG_SQRT_2PI + 0.5 * z * z
        return value, 1.0 + z / self.scale


@dataclass(frozen=True)
class LengthscalePrior:
    """Independent LogNormal priors on ARD lengthscales.

    ``kind == NONE`` is a flat prior and contributes nothing.
    """

    kind: PriorKind
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if np.any(sigma <= 0):
            raise ValueError("prior scales must be positive")
        object.__setattr__(self, "kind", PriorKind(self.kind))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def mode(self) -> np.ndarray:
        """Mode of each LogNormal, ``exp(mu - sigma^2)``."""
        return np.exp(self.mu - self.sigma**2)

    def neg_log_pdf(self, log_ls):
        if self.kind is PriorKind.NONE:
            return 0.0, np.zeros_like(log_ls)
        z = (log_ls - self.mu) / self.sigma
        value = float(np.sum(log_ls + np.log(self.sigma) + LOG_SQRT_2PI + 0.5 * z * z))
        return value, 1.0 + z / self.sigma


def make_prior(kind, D: int, L: float = 1.0) -> LengthscalePrior:
    """Build the lengthscale prior for a ``D``-dimensional local model.

    AdaScale shifts the base location ``sqrt(2)`` by ``log(L sqrt(D))``;
    DScaled shifts it by ``log(sqrt(D))`` only. Both keep scale ``sqrt(3)``.
    """
    kind = PriorKind(kind)
    if D < 1:
        raise ValueError("D must be at least 1")
    if not L > 0:
        raise InvalidTrustRegion(f"trust-region side length must be positive, got {L}")
    if kind is PriorKind.ADASCALE:
        loc = BASE_LOC + math.log(L * math.sqrt(D))
    elif kind is PriorKind.DSCALED:
        loc = BASE_LOC + math.log(math.sqrt(D))
    else:
        loc = 0.0
    return LengthscalePrior(kind, np.full(D, loc), np.full(D, BASE_SCALE))


@dataclass(frozen=True)
class FitConfig:
    mode: FitMode = FitMode.MAP
    lengthscale_bounds: tuple = (0.005, 4.0)
    signal_bounds: tuple = (0.05, 20.0)
    noise_bounds: tuple = (1e-6, 1e-2)
    noise_prior: LogNormal | None = field(default_factory=lambda: LogNormal(math.log(1e-3), 1.0))
    fix_signal_variance: bool = True
    n_restarts: int = 4
    max_iter: int = 200
    tol: float = 1e-5

    @classmethod
    def map(cls, **kwargs) -> "FitConfig":
        return cls(mode=FitMode.MAP, fix_signal_variance=True, **kwargs)

    @classmethod
    def mle(cls, **kwargs) -> "FitConfig":
        return cls(mode=FitMode.MLE, fix_signal_variance=False, noise_prior=None, **kwargs)


def neg_map_objective(params: KernelParams, X, y, prior: LengthscalePrior, noise_prior=None):
    """Negative log posterior over (log lengthscales, log noise), signal variance held fixed.

    Returns ``(value, grad)`` with ``grad`` of length ``D + 1``.
    """
    mll, g = log_marginal_likelihood(params, X, y)
    log_ls = np.log(params.lengthscales)
    value = -mll
    grad = np.concatenate([-g[:-2], [-g[-1]]])
    prior_value, prior_grad = prior.neg_log_pdf(log_ls)
    value += prior_value
    grad[:-1] += prior_grad
    if noise_prior is not None:
        nv, ng = noise_prior.neg_log_pdf(math.log(params.noise_variance))
        value += nv
        grad[-1] += ng
    return value, grad


class _Problem:
    """Maps a flat optimizer vector to kernel parameters for one fit mode."""

    def __init__(self, X, y, config: FitConfig, prior: LengthscalePrior):
        self.X = X
        self.y = y
        self.config = config
        self.prior = prior
        self.dim = X.shape[1]
        if config.mode is FitMode.MAP:
            lo = [MAP_LOG_LENGTHSCALE_RANGE[0]] * self.dim + [math.log(MAP_NOISE_RANGE[0])]
            hi = [MAP_LOG_LENGTHSCALE_RANGE[1]] * self.dim + [math.log(MAP_NOISE_RANGE[1])]
        else:
            lb, ub = (math.log(b) for b in config.lengthscale_bounds)
            lo = [lb] * self.dim
            hi = [ub] * self.dim
            if not config.fix_signal_variance:
                lo.append(math.log(config.signal_bounds[0]))
                hi.append(math.log(config.signal_bounds[1]))
            lo.append(math.log(config.noise_bounds[0]))
            hi.append(math.log(config.noise_bounds[1]))
        self.bounds = BoxBounds(np.array(lo), np.array(hi))

    @property
    def free_signal(self) -> bool:
        return self.config.mode is FitMode.MLE and not self.config.fix_signal_variance

    def params(self, v) -> KernelParams:
        d = self.dim
        sf2 = math.exp(v[d]) if self.free_signal else 1.0
        return KernelParams(np.exp(v[:d]), sf2, max(math.exp(v[-1]), NOISE_FLOOR))

    def vector(self, params: KernelParams) -> np.ndarray:
        parts = [np.log(params.lengthscales)]
        if self.free_signal:
            parts.append([math.log(params.signal_variance)])
        parts.append([math.log(params.noise_variance)])
        return self.bounds.clip(np.concatenate(parts))

    def __call__(self, v):
        p = self.params(v)
        if self.config.mode is FitMode.MAP:
            return neg_map_objective(p, self.X, self.y, self.prior, self.config.noise_prior)
        mll, g = log_marginal_likelihood(p, self.X, self.y)
        if self.free_signal:
            return -mll, -g
        return -mll, -np.concatenate([g[:-2], g[-1:]])

    def default_start(self) -> np.ndarray:
        d = self.dim
        if self.config.mode is FitMode.MAP:
            if self.prior.kind is PriorKind.NONE:
                log_ls = np.zeros(d)
            else:
                log_ls = np.log(self.prior.mode)
            noise = self.config.noise_prior.loc if self.config.noise_prior else math.log(1e-3)
            return self.bounds.clip(np.concatenate([log_ls, [noise]]))
        # geometric midpoint of each box
        return 0.5 * (self.bounds.lower + self.bounds.upper)

    def random_start(self, rng) -> np.ndarray:
        if self.config.mode is FitMode.MAP and self.prior.kind is not PriorKind.NONE:
            log_ls = rng.normal(self.prior.mu, self.prior.sigma)
            noise_prior = self.config.noise_prior or LogNormal(math.log(1e-3), 1.0)
            noise = rng.normal(noise_prior.loc, noise_prior.scale)
            return self.bounds.clip(np.concatenate([log_ls, [noise]]))
        return rng.uniform(self.bounds.lower, self.bounds.upper)


def fit(
    X,
    y,
    config: FitConfig,
    prior: LengthscalePrior,
    seed: int = 0,
    init: KernelParams | None = None,
) -> KernelParams:
    """Fit GP hyperparameters by multi-start local optimization.

    Start 0 is the prior mode (MAP) or the log-box midpoint (MLE); ``init``,
    when given, is the next start; the remainder are seeded random draws.
    The best objective wins, ties going to the lowest start index.

    Raises
    ------
    FitFailed
        If every start fails to produce a positive definite system.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (N, D) with N matching y")
    if X.shape[0] < 1:
        raise ValueError("fit needs at least one observation")
    if prior.dim != X.shape[1]:
        raise ValueError("prior dimension does not match X")
    problem = _Problem(X, y, config, prior)
    rng = np.random.default_rng(seed)

    starts = [problem.default_start()]
    if init is not None and init.dim == problem.dim:
        starts.append(problem.vector(init))
    while len(starts) < max(config.n_restarts, 1):
        starts.append(problem.random_start(rng))

    best_v, best_f = None, math.inf
    errors = []
    for i, v0 in enumerate(starts):
        try:
            v, fv = bounded_minimize(problem, True, problem.bounds, v0, config.max_iter, config.tol)
        except (NotPositiveDefinite, NonFiniteObjective) as exc:
            errors.append(exc)
            log.debug("restart %d failed: %s", i, exc)
            continue
        if fv < best_f:
            best_v, best_f = v, fv
    if best_v is None:
        raise FitFailed(f"all {len(starts)} restarts failed; last error: {errors[-1]}")
    return problem.params(best_v)
