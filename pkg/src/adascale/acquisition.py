"""Log expected improvement (minimization) and its optimization over a box."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import NonFiniteObjective
from .gp import GpModel, posterior, posterior_with_grad
from .numerics import BoxBounds, bounded_minimize, sobol_sequence, std_normal_logs

__all__ = ["AcqOptConfig", "log_ei", "log_ei_with_grad", "log_h", "optimize_acq"]

log = logging.getLogger(__name__)

MILLS_SWITCH = -6.0
SERIES_SWITCH = -40.0
# (2k+1)!! for k = 1..6
_SERIES_COEFFS = np.array([3.0, 15.0, 105.0, 945.0, 10395.0, 135135.0])
HALF_LOG_PI_OVER_2 = 0.5 * math.log(math.pi / 2.0)
# Keeps log(std) finite where the posterior variance rounds to zero.
MIN_VARIANCE = 1e-20


@dataclass(frozen=True)
class AcqOptConfig:
    n_raw: int = 20
    n_starts: int = 5
    max_iter: int = 20
    tol: float = 1e-6

    def __post_init__(self):
        if not 1 <= self.n_starts <= self.n_raw:
            raise ValueError("need 1 <= n_starts <= n_raw")


def _log1mexp(a):
    # log(1 - exp(a)) for a < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > -math.log(2.0), np.log(-np.expm1(a)), np.log1p(-np.exp(a)))


def log_h(z):
    """``log(phi(z) + z Phi(z))``, stable across the real line.

    Direct evaluation above ``z = -6``; the erfcx form of the Mills ratio
    down to ``z = -40``; below that the asymptotic Mills series
    ``h(z) = phi(z) / z^2 * (1 - 3/z^2 + 15/z^4 - ...)``.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    direct = z > MILLS_SWITCH
    far = z <= SERIES_SWITCH
    mid = ~direct & ~far
    with np.errstate(divide="ignore"):
        zd = z[direct]
        out[direct] = np.log(np.exp(-0.5 * zd * zd) / math.sqrt(2 * math.pi) + zd * special.ndtr(zd))
    if np.any(mid):
        zm = z[mid]
        log_pdf, _ = std_normal_logs(zm)
        # Mills ratio Phi(z)/phi(z) = sqrt(pi/2) erfcx(-z/sqrt2)
        log_mills = np.log(special.erfcx(-zm / math.sqrt(2.0))) + HALF_LOG_PI_OVER_2
        out[mid] = log_pdf + _log1mexp(np.log(-zm) + log_mills)
    if np.any(far):
        zf = z[far]
        inv = 1.0 / (zf * zf)
        powers = inv[:, None] ** np.arange(1, _SERIES_COEFFS.size + 1)
        signs = (-1.0) ** np.arange(1, _SERIES_COEFFS.size + 1)
        series = powers @ (signs * _SERIES_COEFFS)
        out[far] = std_normal_logs(zf)[0] - 2.0 * np.log(-zf) + np.log1p(series)
    return out if out.ndim else float(out)


def log_ei(mean, std, best):
    """Log expected improvement of ``best - f`` under ``f ~ N(mean, std^2)``.

    Zero ``std`` gives ``log(max(best - mean, 0))``, i.e. ``-inf`` when no
    improvement is possible.
    """
    mean, std, best = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(std, dtype=float), np.asarray(best, dtype=float)
    )
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    out = np.empty(mean.shape)
    pos = std > 0
    with np.errstate(divide="ignore"):
        z = (best[pos] - mean[pos]) / std[pos]
        out[pos] = np.log(std[pos]) + np.atleast_1d(log_h(z))
        out[~pos] = np.log(np.maximum(best[~pos] - mean[~pos], 0.0))
    return out if out.ndim else float(out)


def log_ei_with_grad(model: GpModel, x, best: float):
    """LogEI of the model posterior at ``x`` with its gradient in ``x``."""
    mean, var, dmean, dvar = posterior_with_grad(model, x)
    if var < MIN_VARIANCE:
        var, dvar = MIN_VARIANCE, np.zeros_like(dvar)
    s = math.sqrt(var)
    ds = dvar / (2.0 * s)
    z = (best - mean) / s
    lh = log_h(z)
    _, log_cdf = std_normal_logs(z)
    dlh = math.exp(log_cdf - lh)  # d log h / dz = Phi(z) / h(z)
    dz = (-dmean - z * ds) / s
    return math.log(s) + lh, ds / s + dlh * dz


def acquisition_values(model: GpModel, X, best: float) -> np.ndarray:
    mean, var = posterior(model, X)
    return log_ei(mean, np.sqrt(np.maximum(var, MIN_VARIANCE)), best)


def optimize_acq(
    model: GpModel, best: float, box: BoxBounds, config: AcqOptConfig = AcqOptConfig(), seed: int = 0
) -> np.ndarray:
    """Maximize LogEI over ``box``.

    ``config.n_raw`` scrambled Sobol points are ranked by LogEI, the top
    ``config.n_starts`` are refined with L-BFGS-B, and the best refined
    point is returned. Ties go to the lower raw-sample index.
    """
    raw = box.scale(sobol_sequence(config.n_raw, box.dim, seed=seed, scramble=True))
    raw = box.clip(raw)
    values = acquisition_values(model, raw, best)
    order = np.argsort(-values, kind="stable")[: config.n_starts]

    def neg(x):
        value, grad = log_ei_with_grad(model, x, best)
        return -value, -grad

    best_x, best_val = raw[order[0]], values[order[0]]
    for i in order:
        if not np.isfinite(values[i]):
            continue
        try:
            x, fx = bounded_minimize(neg, True, box, raw[i], config.max_iter, config.tol)
        except NonFiniteObjective as exc:
            log.debug("acquisition refinement from raw point %d failed: %s", i, exc)
            continue
        if -fx > best_val:
            best_x, best_val = x, -fx
    return np.array(best_x, dtype=float)
