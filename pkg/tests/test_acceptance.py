"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import math
import os
import time

import numpy as np
import pytest
from scipy.stats import norm

from adascale.acquisition import log_ei
from adascale.gp import GpModel, KernelParams, log_marginal_likelihood, posterior
from adascale.harness import parse_config, run_experiment
from adascale.mig import (
    expected_distance_bounds,
    independent_ig,
    mc_expected_distance,
    scaling_invariance_details,
    sobol_mig_curve,
)
from adascale.trust_region import TrustRegionState, failure_tolerance, update_tr


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


def test_criterion_1_distance_bounds(report):
    start = time.perf_counter()
    failures = []
    for D in (2, 20, 50, 100):
        for L in (0.1, 0.5, 1.0):
            lo, hi = expected_distance_bounds(D, L)
            est, se = mc_expected_distance(D, L, 100_000, seed=D)
            if not lo - 3 * se <= est <= hi + 3 * se:
                failures.append((D, L, est, lo, hi))
    lo, hi = expected_distance_bounds(100, 0.5)
    examples = abs(lo - 1.66667) <= 1e-4 and abs(hi - 2.0392) <= 1e-4
    elapsed = time.perf_counter() - start
    ok = not failures and examples and elapsed < 30
    report(1, ok, f"12 grid cells inside bounds, failures={failures}, D=100 L=0.5 -> [{lo:.5f}, {hi:.5f}], {elapsed:.1f}s")


def test_criterion_2_scaling_invariance(report):
    start = time.perf_counter()
    worst_gram = worst_ig = 0.0
    for D in (10, 100):
        for L in (0.1, 0.3, 0.8):
            diff, ig, ig_local = scaling_invariance_details(D, L, 64, 0.3, seed=0)
            worst_gram = max(worst_gram, diff)
            worst_ig = max(worst_ig, abs(ig - ig_local))
    elapsed = time.perf_counter() - start
    ok = worst_gram <= 1e-12 and worst_ig <= 1e-10 and elapsed < 10
    report(2, ok, f"max Gram diff {worst_gram:.2e}, max IG gap {worst_ig:.2e} nats, {elapsed:.1f}s")


def test_criterion_3_mig_curves(report):
    start = time.perf_counter()
    grid = range(1, 201)
    sides = (0.8, 0.4, 0.2, 0.1)
    ig = {L: np.array([v for _, v in sobol_mig_curve(100, L, 0.5, 0.01, grid).points]) for L in sides}
    indep = np.array([independent_ig(n, 0.01) for n in grid])
    ordered = all(np.all(ig[a] >= ig[b]) for a, b in zip(sides, sides[1:]))
    near_linear = float(np.min(ig[0.8] / indep))
    deviation = float(ig[0.1][-1] / indep[-1])
    elapsed = time.perf_counter() - start
    ok = ordered and near_linear >= 0.9 and deviation <= 0.6 and elapsed < 120
    report(
        3,
        ok,
        f"(a) ordering {ordered}; (b) min IG/indep at L=0.8 {near_linear:.6f} >= 0.9; "
        f"(c) IG/indep at L=0.1, N=200 {deviation:.4f} <= 0.6; {elapsed:.1f}s",
    )


def test_criterion_4_gp_numerics(report):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(20, 5))
        y = np.sin(3 * X).sum(axis=1)
        y = (y - y.mean()) / y.std()
        params = KernelParams(rng.uniform(0.3, 2, 5), rng.uniform(0.5, 2), rng.uniform(1e-3, 1e-1))
        theta = params.to_log_vector()
        _, grad = log_marginal_likelihood(params, X, y)
        fd = np.empty_like(theta)
        for i in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += 1e-5
            tm[i] -= 1e-5
            fp = log_marginal_likelihood(KernelParams.from_log_vector(tp), X, y)[0]
            fm = log_marginal_likelihood(KernelParams.from_log_vector(tm), X, y)[0]
            fd[i] = (fp - fm) / 2e-5
        worst = max(worst, float(np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-6))))
    model = GpModel.condition([[0.5, 0.5]], [1.3], KernelParams([0.2, 0.2], 1.0, 1e-6))
    mean, _ = posterior(model, [[0.5, 0.5]])
    interp = abs(mean[0] - 1.3)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and interp <= 1e-3 and elapsed < 10
    report(4, ok, f"max relative gradient error {worst:.2e}, interpolation error {interp:.2e}, {elapsed:.1f}s")


def test_criterion_5_logei(report):
    start = time.perf_counter()
    worst = 0.0
    for std in np.geomspace(1e-3, 10, 25):
        for z in np.linspace(-3, 3, 61):
            mean = 0.2 - z * std
            direct = std * (norm.pdf(z) + z * norm.cdf(z))
            worst = max(worst, abs(math.exp(log_ei(mean, std, 0.2)) / direct - 1))
    far = log_ei(30.0, 1.0, 0.0)
    tail = log_ei(5.0, 1.0, 0.0)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and math.isfinite(far) and abs(tail + 16.745) <= 1e-3 and elapsed < 1
    report(5, ok, f"max relative EI error {worst:.2e}, z=-30 -> {far:.4f}, z=-5 -> {tail:.5f}, {elapsed:.2f}s")


def test_criterion_6_state_machine(report):
    start = time.perf_counter()
    center = np.full(50, 0.5)
    tau_fail = failure_tolerance(50, 1)
    checks = {}
    s = TrustRegionState.initial(center)
    for _ in range(3):
        s, _ = update_tr(s, 0.0, 1.0)
    checks["double at 3 successes"] = s.L == 1.6 and s.succ_count == 0
    for _ in range(3):
        s, _ = update_tr(s, 0.0, 1.0)
    checks["cap at 1.6"] = s.L == 1.6
    s = TrustRegionState.initial(center)
    for k in range(tau_fail):
        s, restart = update_tr(s, 1.0, 1.0)
    checks["halve at tau_fail"] = s.L == 0.4 and s.fail_count == 0 and not restart
    checks["tau_fail formula"] = (tau_fail, failure_tolerance(2, 1), failure_tolerance(100, 8)) == (50, 4, 13)
    s = TrustRegionState.initial(center, tau_fail=1)
    halvings = 0
    while True:
        s, restart = update_tr(s, 1.0, 1.0)
        halvings += 1
        if restart:
            break
    checks["restart below 0.5^7"] = halvings == 7 and s.L == 0.8 and (s.succ_count, s.fail_count) == (0, 0)
    elapsed = time.perf_counter() - start
    ok = all(checks.values()) and elapsed < 1
    failed = [k for k, v in checks.items() if not v]
    report(6, ok, f"{len(checks)} transition checks, failed={failed}, {elapsed:.3f}s")


def desk_config(tmp_path, L0):
    return parse_config(
        {
            "experiment": {
                "name": f"rastrigin50_L{L0}",
                "output_dir": str(tmp_path / f"L{L0}"),
                "base_seed": 0,
                "n_replicates": 5,
                "budget": 300,
                "n_init": 10,
                "refit_every": 10,
                "variants": ["AdaScaleTuRBO", "TuRBOMLE"],
                "L0": L0,
            },
            "benchmark": {"name": "Rastrigin", "dim": 50},
        }
    )


def jobs():
    return max(1, min(5, os.cpu_count() or 1))


def compare(tmp_path, L0):
    start = time.perf_counter()
    result = run_experiment(desk_config(tmp_path, L0), jobs=jobs())
    elapsed = time.perf_counter() - start
    ada = result.summary.final["AdaScaleTuRBO"]
    mle = result.summary.final["TuRBOMLE"]
    wins = int(np.sum(ada.values < mle.values))
    detail = (
        f"L0={L0}: median final best AdaScaleTuRBO {ada.median:.2f} vs TuRBOMLE {mle.median:.2f} "
        f"(paired wins {wins}/5), {elapsed / 60:.1f} min"
    )
    return ada.median < mle.median, elapsed, detail


@pytest.mark.slow
def test_criterion_7_desk_scale_rastrigin(tmp_path, report):
    better, elapsed, detail = compare(tmp_path, 0.8)
    report(7, better and elapsed < 30 * 60, detail)


@pytest.mark.slow
def test_criterion_8_side_length_ablation(tmp_path, report):
    for L0 in (0.8, 0.4, 0.2):
        assert desk_config(tmp_path, L0).optimizer_config().L_init == L0
    better, _, detail = compare(tmp_path, 0.4)
    report(8, better, detail)


def test_criterion_9_reproducibility(tmp_path, report):
    data = {
        "experiment": {
            "output_dir": str(tmp_path / "rep"),
            "base_seed": 11,
            "n_replicates": 2,
            "budget": 40,
            "variants": ["AdaScaleTuRBO", "TuRBOMLE", "DScaledTuRBO", "DScaledGlobal"],
        },
        "benchmark": {"name": "Michalewicz", "dim": 6},
    }
    config = parse_config(data)
    run_experiment(config)
    first = {p.name: p.read_bytes() for p in sorted(config.output_dir.iterdir())}
    run_experiment(config, jobs=jobs())
    second = {p.name: p.read_bytes() for p in sorted(config.output_dir.iterdir())}
    ok = first == second and len(first) == 8 + 3
    report(9, ok, f"{len(first)} files byte-identical across reruns: {first == second}")
