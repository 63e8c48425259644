"""ARD Matern-5/2 Gaussian process regression.

Hyperparameter gradients are taken with respect to log-parameters, in the
order ``[log lengthscales (D), log signal variance, log noise variance]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .numerics import CholFactor, cholesky_logdet

__all__ = [
    "GpModel",
    "KernelParams",
    "PriorSampleObjective",
    "cross_cov",
    "gram",
    "log_marginal_likelihood",
    "matern52_ard",
    "matern52_profile",
    "posterior",
    "sample_prior_objective",
]

SQRT5 = math.sqrt(5.0)
NOISE_FLOOR = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelParams:
    lengthscales: np.ndarray
    signal_variance: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        if ls.ndim != 1 or not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be a vector of positive finite values")
        if not (self.signal_variance >= 0 and math.isfinite(self.signal_variance)):
            raise ValueError("signal_variance must be non-negative and finite")
        # small relative slack for values that went through exp(log(.))
        if not self.noise_variance >= NOISE_FLOOR * (1 - 1e-9):
            raise ValueError(f"noise_variance must be >= {NOISE_FLOOR}")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @classmethod
    def isotropic(cls, dim, lengthscale, signal_variance=1.0, noise_variance=1e-6):
        return cls(np.full(dim, float(lengthscale)), signal_variance, noise_variance)

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    def to_log_vector(self) -> np.ndarray:
        return np.concatenate(
            [np.log(self.lengthscales), [math.log(self.signal_variance), math.log(self.noise_variance)]]
        )

    @classmethod
    def from_log_vector(cls, theta) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(
            np.exp(theta[:-2]),
            math.exp(theta[-2]),
            max(math.exp(theta[-1]), NOISE_FLOOR),
        )


def matern52_profile(r, signal_variance=1.0):
    """Matern-5/2 covariance as a function of the scaled distance ``r``."""
    r = np.asarray(r, dtype=float)
    s = SQRT5 * r
    return signal_variance * (1.0 + s + s * s / 3.0) * np.exp(-s)


def _scaled_distance(X1, X2, lengthscales):
    return cdist(X1 / lengthscales, X2 / lengthscales)


def matern52_ard(x, x2, params: KernelParams) -> float:
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != (params.dim,) or x2.shape != (params.dim,):
        raise ValueError("point dimensions must match the lengthscale vector")
    r = math.sqrt(float(np.sum(((x - x2) / params.lengthscales) ** 2)))
    return float(matern52_profile(r, params.signal_variance))


def cross_cov(X1, X2, params: KernelParams) -> np.ndarray:
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    return matern52_profile(_scaled_distance(X1, X2, params.lengthscales), params.signal_variance)


def gram(X, params: KernelParams) -> np.ndarray:
    """Noise-free Gram matrix; exactly symmetric with diagonal ``signal_variance``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = cross_cov(X, X, params)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, params.signal_variance)
    return K


@dataclass(frozen=True)
class GpModel:
    """GP conditioned on ``(train_x, train_y)`` with fixed hyperparameters.

    Build instances with :meth:`condition`; the cached factor and weights
    are consistent with the data and parameters by construction.
    """

    train_x: np.ndarray
    train_y: np.ndarray
    params: KernelParams
    chol: CholFactor | None = field(repr=False, default=None)
    alpha: np.ndarray | None = field(repr=False, default=None)

    @classmethod
    def condition(cls, X, y, params: KernelParams, base_jitter: float = 0.0) -> "GpModel":
        X = np.asarray(X, dtype=float).reshape(-1, params.dim)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y have different numbers of rows")
        if X.shape[0] == 0:
            return cls(X, y, params, cholesky_logdet(np.zeros((0, 0))), np.zeros(0))
        A = gram(X, params) + params.noise_variance * np.eye(X.shape[0])
        chol = cholesky_logdet(A, base_jitter)
        return cls(X, y, params, chol, chol.solve(y))

    @property
    def n(self) -> int:
        return self.train_x.shape[0]

    @property
    def dim(self) -> int:
        return self.params.dim


def posterior(model: GpModel, Xq):
    """Posterior mean and latent-function variance at query rows ``Xq``."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    prior_var = np.full(Xq.shape[0], model.params.signal_variance)
    if model.n == 0:
        return np.zeros(Xq.shape[0]), prior_var
    Ks = cross_cov(model.train_x, Xq, model.params)
    mean = Ks.T @ model.alpha
    v = model.chol.solve_lower(Ks)
    var = np.maximum(prior_var - np.einsum("ij,ij->j", v, v), 0.0)
    return mean, var


def posterior_with_grad(model: GpModel, x):
    """Mean, variance and their gradients with respect to one query point."""
    x = np.asarray(x, dtype=float)
    ls2 = model.params.lengthscales**2
    sf2 = model.params.signal_variance
    if model.n == 0:
        return 0.0, sf2, np.zeros_like(x), np.zeros_like(x)
    diff = x[None, :] - model.train_x
    r = np.sqrt(np.sum(diff * diff / ls2, axis=1))
    e = np.exp(-SQRT5 * r)
    k = sf2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e
    # dk/dx = -sf2 * 5/3 (1 + sqrt5 r) e^{-sqrt5 r} * diff / ls^2
    dk = -(sf2 * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e)[:, None] * diff / ls2
    mean = float(k @ model.alpha)
    dmean = dk.T @ model.alpha
    w = model.chol.solve(k)
    var = sf2 - float(k @ w)
    dvar = -2.0 * (dk.T @ w)
    if var <= 0.0:
        return mean, 0.0, dmean, np.zeros_like(x)
    return mean, var, dmean, dvar


def log_marginal_likelihood(params: KernelParams, X, y, base_jitter: float = 0.0):
    """Log marginal likelihood and its gradient in log-parameter space.

    Returns
    -------
    value : float
    grad : ndarray, shape (D + 2,)
        Derivatives with respect to ``log lengthscales``, ``log signal
        variance`` and ``log noise variance``.
    """
    X = np.asarray(X, dtype=float).reshape(-1, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n == 0:
        return 0.0, np.zeros(d + 2)
    ls = params.lengthscales
    sf2 = params.signal_variance
    r = _scaled_distance(X, X, ls)
    e = np.exp(-SQRT5 * r)
    K = sf2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e
    np.fill_diagonal(K, sf2)
    chol = cholesky_logdet(K + params.noise_variance * np.eye(n), base_jitter)
    alpha = chol.solve(y)
    value = -0.5 * float(y @ alpha) - 0.5 * chol.log_det - 0.5 * n * LOG_2PI

    W = np.outer(alpha, alpha) - chol.inverse()
    # dK/dlog(l_j) = sf2 * 5/3 (1 + sqrt5 r) e^{-sqrt5 r} * (x_j - x'_j)^2 / l_j^2
    F = W * (sf2 * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e)
    grad = np.empty(d + 2)
    for j in range(d):
        col = X[:, j] / ls[j]
        grad[j] = 0.5 * float(np.sum(F * (col[:, None] - col[None, :]) ** 2))
    grad[d] = 0.5 * float(np.sum(W * K))
    grad[d + 1] = 0.5 * params.noise_variance * float(np.trace(W))
    return value, grad


@dataclass(frozen=True)
class PriorSampleObjective:
    """Random-feature draw from an isotropic Matern-5/2 GP prior.

    ``f(x) = sqrt(2 sigma_f^2 / M) * sum_m w_m cos(omega_m . x + b_m)``
    """

    feature_weights: np.ndarray
    feature_phases: np.ndarray
    output_weights: np.ndarray
    lengthscale: float
    signal_variance: float = 1.0

    @property
    def dim(self) -> int:
        return self.feature_weights.shape[1]

    @property
    def n_features(self) -> int:
        return self.feature_weights.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        proj = np.atleast_2d(x) @ self.feature_weights.T + self.feature_phases
        scale = math.sqrt(2.0 * self.signal_variance / self.n_features)
        values = scale * (np.cos(proj) @ self.output_weights)
        return float(values[0]) if x.ndim == 1 else values


def sample_prior_objective(
    D: int, lengthscale: float, n_features: int = 2048, seed: int = 0
) -> PriorSampleObjective:
    """Draw a function from an isotropic Matern-5/2 GP prior with unit variance.

    Frequencies come from the kernel's spectral density, a multivariate
    Student-t with 5 degrees of freedom and scale ``1 / lengthscale``.
    """
    if n_features < 256:
        raise ValueError("n_features must be at least 256")
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_features, D))
    chi2 = rng.chisquare(5.0, size=n_features)
    omega = g * np.sqrt(5.0 / chi2)[:, None] / lengthscale
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_features)
    weights = rng.standard_normal(n_features)
    return PriorSampleObjective(omega, phases, weights, float(lengthscale))
