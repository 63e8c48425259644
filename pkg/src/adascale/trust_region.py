"""TuRBO-1 trust-region state machine and the optimizer loops built on it."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .acquisition import AcqOptConfig, optimize_acq
from .exceptions import FitFailed, InvalidTrustRegion, ObjectiveFailure
from .gp import GpModel, KernelParams
from .hyperfit import FitConfig, FitMode, LengthscalePrior, PriorKind, fit, make_prior
from .numerics import BoxBounds, sobol_sequence

__all__ = [
    "OptimizerConfig",
    "OptimizerVariant",
    "RefitEvent",
    "RunRecord",
    "TrustRegionState",
    "failure_tolerance",
    "run_optimizer",
    "tr_box",
    "update_tr",
]

log = logging.getLogger(__name__)

L_INIT = 0.8
L_MIN = 0.5**7
L_MAX = 1.6
TAU_SUCC = 3

# stream tags for derived seeds
_DESIGN, _ACQ, _FIT = 0, 1, 2


def failure_tolerance(D: int, q: int = 1) -> int:
    """``ceil(max(4/q, D/q))`` in exact integer arithmetic."""
    if D < 1 or q < 1:
        raise ValueError("D and q must be at least 1")
    return max(-(-4 // q), -(-D // q))


@dataclass(frozen=True)
class TrustRegionState:
    """Side length and success/failure counters of one trust region."""

    center: np.ndarray
    L: float
    succ_count: int = 0
    fail_count: int = 0
    tau_succ: int = TAU_SUCC
    tau_fail: int = 4
    L_init: float = L_INIT
    L_min: float = L_MIN
    L_max: float = L_MAX

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.L > 0:
            raise InvalidTrustRegion(f"side length must be positive, got {self.L}")
        if self.L > self.L_max:
            raise InvalidTrustRegion(f"side length {self.L} exceeds L_max={self.L_max}")
        if not 0 < self.L_min <= self.L_init <= self.L_max:
            raise InvalidTrustRegion("need 0 < L_min <= L_init <= L_max")
        if self.succ_count < 0 or self.fail_count < 0:
            raise ValueError("counters must be non-negative")
        if self.succ_count and self.fail_count:
            raise ValueError("at most one counter may be nonzero")
        if self.tau_succ < 1 or self.tau_fail < 1:
            raise ValueError("tolerances must be at least 1")

    @classmethod
    def initial(
        cls,
        center,
        q: int = 1,
        L_init: float = L_INIT,
        L_min: float = L_MIN,
        L_max: float = L_MAX,
        tau_succ: int = TAU_SUCC,
        tau_fail: int | None = None,
    ) -> "TrustRegionState":
        center = np.asarray(center, dtype=float)
        if tau_fail is None:
            tau_fail = failure_tolerance(center.shape[0], q)
        return cls(center, L_init, 0, 0, tau_succ, tau_fail, L_init, L_min, L_max)


def tr_box(state: TrustRegionState, domain: BoxBounds, lengthscales=None) -> BoxBounds:
    """Hypercube of side ``L`` around the center, clipped to ``domain``.

    With ``lengthscales`` the per-axis widths are ``L * w`` where ``w`` is
    proportional to the lengthscales with unit geometric mean.
    """
    if not domain.contains(state.center):
        raise ValueError("trust-region center lies outside the domain")
    half = np.full(domain.dim, 0.5 * state.L)
    if lengthscales is not None:
        w = np.asarray(lengthscales, dtype=float)
        w = w / np.exp(np.mean(np.log(w)))
        half = half * w
    lower = np.maximum(state.center - half, domain.lower)
    upper = np.minimum(state.center + half, domain.upper)
    return BoxBounds(lower, upper)


def update_tr(
    state: TrustRegionState, y_batch_min: float, y_incumbent: float, rel_threshold: float = 0.0
) -> tuple[TrustRegionState, bool]:
    """Apply one round of success/failure bookkeeping.

    Success means ``y_batch_min < y_incumbent - rel_threshold * |y_incumbent|``.
    Returns the new state and whether a restart was triggered; on restart
    the state is reset to ``(L_init, 0, 0)``.
    """
    success = y_batch_min < y_incumbent - rel_threshold * abs(y_incumbent)
    if success:
        succ, fail = state.succ_count + 1, 0
    else:
        succ, fail = 0, state.fail_count + 1
    L = state.L
    if succ >= state.tau_succ:
        L, succ = min(state.L_max, 2.0 * L), 0
    elif fail >= state.tau_fail:
        L, fail = 0.5 * L, 0
    if L < state.L_min:
        return replace(state, L=state.L_init, succ_count=0, fail_count=0), True
    return replace(state, L=L, succ_count=succ, fail_count=fail), False


class OptimizerVariant(str, enum.Enum):
    ADASCALE_TURBO = "AdaScaleTuRBO"
    TURBO_MLE = "TuRBOMLE"
    DSCALED_TURBO = "DScaledTuRBO"
    DSCALED_GLOBAL = "DScaledGlobal"

    @property
    def prior_kind(self) -> PriorKind:
        return {
            "AdaScaleTuRBO": PriorKind.ADASCALE,
            "TuRBOMLE": PriorKind.NONE,
            "DScaledTuRBO": PriorKind.DSCALED,
            "DScaledGlobal": PriorKind.DSCALED,
        }[self.value]

    @property
    def fit_mode(self) -> FitMode:
        return FitMode.MLE if self is OptimizerVariant.TURBO_MLE else FitMode.MAP

    @property
    def uses_trust_region(self) -> bool:
        return self is not OptimizerVariant.DSCALED_GLOBAL


@dataclass(frozen=True)
class OptimizerConfig:
    """Trust-region, acquisition and fitting settings shared by all variants."""

    q: int = 1
    L_init: float = L_INIT
    L_min: float = L_MIN
    L_max: float = L_MAX
    tau_succ: int = TAU_SUCC
    tau_fail: int | None = None
    success_threshold: float = 0.0
    weighted_box: bool = False
    acq: AcqOptConfig = field(default_factory=AcqOptConfig)
    fit_restarts: int = 4
    fit_max_iter: int = 200

    def __post_init__(self):
        if self.q != 1:
            raise ValueError("only sequential proposals (q=1) are supported")
        if not 0 < self.L_min <= self.L_init <= self.L_max:
            raise InvalidTrustRegion("need 0 < L_min <= L_init <= L_max")

    def fit_config(self, mode: FitMode) -> FitConfig:
        factory = FitConfig.map if mode is FitMode.MAP else FitConfig.mle
        return factory(n_restarts=self.fit_restarts, max_iter=self.fit_max_iter)


@dataclass(frozen=True)
class RefitEvent:
    """Passed to the ``on_refit`` hook after every hyperparameter fit."""

    n_evals: int
    L: float
    prior: LengthscalePrior
    params: KernelParams


@dataclass(frozen=True)
class RunRecord:
    """Evaluation trace of one optimizer run.

    ``L_at_proposal`` is NaN for the global variant, which has no trust
    region. ``restart_flag`` marks the evaluation that triggered a restart.
    """

    seed: int
    variant: OptimizerVariant
    x: np.ndarray
    y: np.ndarray
    best_so_far: np.ndarray
    L_at_proposal: np.ndarray
    restart_flag: np.ndarray
    valid: bool = True

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    @property
    def final_best(self) -> float:
        return float(self.best_so_far[-1]) if self.n_rows else math.inf


class _RecordBuilder:
    def __init__(self, seed, variant, dim):
        self.seed, self.variant, self.dim = seed, variant, dim
        self.x, self.y, self.L, self.flags = [], [], [], []

    @property
    def n(self) -> int:
        return len(self.y)

    def append(self, x, y, L):
        self.x.append(np.array(x, dtype=float))
        self.y.append(y)
        self.L.append(L)
        self.flags.append(False)

    def build(self, valid=True) -> RunRecord:
        y = np.array(self.y, dtype=float)
        x = np.array(self.x, dtype=float).reshape(-1, self.dim)
        best = np.minimum.accumulate(y) if y.size else y
        return RunRecord(
            self.seed,
            self.variant,
            x,
            y,
            best,
            np.array(self.L, dtype=float),
            np.array(self.flags, dtype=bool),
            valid,
        )


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 32-bit seed for a named random stream of one run."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _standardize(y):
    y = np.asarray(y, dtype=float)
    sd = float(np.std(y))
    if not sd > 1e-12:
        sd = 1.0
    return (y - np.mean(y)) / sd


def run_optimizer(
    objective: Callable,
    dim: int,
    variant,
    budget: int,
    n_init: int = 10,
    seed: int = 0,
    refit_every: int = 10,
    config: OptimizerConfig | None = None,
    on_refit: Callable[[RefitEvent], None] | None = None,
) -> RunRecord:
    """Minimize ``objective`` over ``[0, 1]^dim`` with exactly ``budget`` evaluations.

    Each local run starts from a seeded scrambled Sobol design of ``n_init``
    points (truncated if the budget runs out). Hyperparameters are refit
    every ``refit_every`` new observations and after every (re)start; in
    between, the GP is only re-conditioned. For the AdaScale variant the
    prior is rebuilt from the side length in effect at each refit.

    Raises
    ------
    ObjectiveFailure
        If the objective raises or returns a non-finite value. The partial
        record, marked invalid, is attached.
    """
    variant = OptimizerVariant(variant)
    config = config or OptimizerConfig()
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if n_init < 1 or budget <= n_init:
        raise ValueError("need 1 <= n_init < budget")
    if refit_every < 1:
        raise ValueError("refit_every must be at least 1")
    domain = BoxBounds.unit(dim)
    use_tr = variant.uses_trust_region
    fit_config = config.fit_config(variant.fit_mode)
    record = _RecordBuilder(seed, variant, dim)

    def evaluate(x, L):
        try:
            y = float(objective(x))
        except Exception as exc:
            raise ObjectiveFailure(f"objective raised at row {record.n}: {exc}", record.build(False)) from exc
        if not math.isfinite(y):
            raise ObjectiveFailure(f"objective returned {y} at row {record.n}", record.build(False))
        record.append(x, y, L)
        return y

    def start_local(k):
        n_design = min(n_init, budget - record.n)
        design = sobol_sequence(n_init, dim, seed=derive_seed(seed, _DESIGN, k))[:n_design]
        L = config.L_init if use_tr else math.nan
        return [x for x in design], [evaluate(x, L) for x in design]

    def refit(X, Y, L, init):
        scale = L if variant.prior_kind is PriorKind.ADASCALE else 1.0
        prior = make_prior(variant.prior_kind, dim, scale)
        y_std = _standardize(Y)
        try:
            params = fit(np.array(X), y_std, fit_config, prior, derive_seed(seed, _FIT, record.n), init)
        except FitFailed as exc:
            if init is None:
                raise
            log.warning("refit at %d evaluations failed, keeping previous parameters: %s", record.n, exc)
            params = init
        if on_refit is not None:
            on_refit(RefitEvent(record.n, L, prior, params))
        return params

    def new_state(center):
        return TrustRegionState.initial(
            center, config.q, config.L_init, config.L_min, config.L_max, config.tau_succ, config.tau_fail
        )

    restarts = 0
    X, Y = start_local(restarts)
    state = new_state(X[0]) if use_tr else None
    params = refit(X, Y, config.L_init if use_tr else 1.0, None)
    since_fit = 0
    while record.n < budget:
        i_star = int(np.argmin(Y))
        y_star = Y[i_star]
        if use_tr:
            state = replace(state, center=X[i_star])
            box = tr_box(state, domain, params.lengthscales if config.weighted_box else None)
            L = state.L
        else:
            box, L = domain, math.nan
        y_std = _standardize(Y)
        model = GpModel.condition(np.array(X), y_std, params)
        x_next = optimize_acq(model, float(np.min(y_std)), box, config.acq, derive_seed(seed, _ACQ, record.n))
        y_next = evaluate(x_next, L)
        X.append(x_next)
        Y.append(y_next)
        since_fit += 1
        if since_fit >= refit_every:
            params = refit(X, Y, L if use_tr else 1.0, params)
            since_fit = 0
        if not use_tr:
            continue
        state, restart = update_tr(state, y_next, y_star, config.success_threshold)
        if restart:
            record.flags[-1] = True
            if record.n >= budget:
                break
            restarts += 1
            X, Y = start_local(restarts)
            state = new_state(X[0])
            params = refit(X, Y, state.L, None)
            since_fit = 0
    return record.build()
