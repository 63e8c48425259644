"""Experiment configs, seeded replication, trace persistence and summary statistics."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .acquisition import AcqOptConfig
from .benchmarks import BENCHMARK_NAMES, Benchmark
from .exceptions import ConfigError, MismatchedTraces, ObjectiveFailure
from .mig import expected_distance_bounds, mc_expected_distance, scaling_invariance_details
from .trust_region import L_MAX, L_MIN, OptimizerConfig, OptimizerVariant, RunRecord, run_optimizer

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ExperimentConfig",
    "FinalStats",
    "SummaryTable",
    "load_config",
    "load_trace",
    "parse_config",
    "run_experiment",
    "summarize",
    "verify_propositions",
    "write_summary",
    "write_trace",
]

log = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"
TRACE_FIXED_COLUMNS = ("iter", "y", "best_so_far", "L_at_proposal", "restart_flag")
SUMMARY_COLUMNS = ("variant", "iter", "n", "median", "stderr", "mean", "q25", "q75")
FINAL_COLUMNS = ("variant", "replicate", "final_best")
TRACE_NAME = re.compile(r"trace_(?P<variant>.+)_r(?P<rep>\d+)\.csv$")


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % value
    return str(value)


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: str
    dim: int
    variants: tuple
    budget: int
    output_dir: Path
    n_init: int = 10
    refit_every: int = 10
    n_replicates: int = 10
    base_seed: int = 0
    L0: float = 0.8
    name: str = "experiment"
    benchmark_params: dict = field(default_factory=dict)
    success_threshold: float = 0.0
    weighted_box: bool = False
    fit_restarts: int = 4
    n_raw: int = 20
    n_starts: int = 5
    acq_max_iter: int = 20

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            L_init=self.L0,
            success_threshold=self.success_threshold,
            weighted_box=self.weighted_box,
            acq=AcqOptConfig(self.n_raw, self.n_starts, self.acq_max_iter),
            fit_restarts=self.fit_restarts,
        )

    def make_benchmark(self) -> Benchmark:
        return Benchmark(self.benchmark, self.dim, dict(self.benchmark_params))


def _typed(table, section, key, kind, default=None, required=False):
    name = f"{section}.{key}"
    if key not in table:
        if required:
            raise ConfigError(f"{name}: required key is missing")
        return default
    value = table[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        value = float(value)
    elif kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true or false, got {value!r}")
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def _check(cond, key, message):
    if not cond:
        raise ConfigError(f"{key}: {message}")


_ALLOWED = {
    "experiment": {
        "name", "output_dir", "base_seed", "n_replicates", "budget", "n_init",
        "refit_every", "variants", "L0",
    },
    "benchmark": {"name", "dim", "m", "lengthscale", "seed", "n_features"},
    "optimizer": {
        "success_threshold", "weighted_box", "fit_restarts", "n_raw", "n_starts", "acq_max_iter",
    },
}


def parse_config(data: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    """Validate a parsed config mapping.

    Relative ``output_dir`` values resolve against ``base_dir``.

    Raises
    ------
    ConfigError
        Naming the first offending key.
    """
    for section in data:
        _check(section in _ALLOWED, section, f"unknown section; expected one of {sorted(_ALLOWED)}")
        _check(isinstance(data[section], dict), section, "expected a table")
        for key in data[section]:
            _check(key in _ALLOWED[section], f"{section}.{key}", "unknown key")
    exp = data.get("experiment")
    _check(exp is not None, "experiment", "required section is missing")
    bench = data.get("benchmark")
    _check(bench is not None, "benchmark", "required section is missing")
    opt = data.get("optimizer", {})

    name = _typed(bench, "benchmark", "name", str, required=True)
    _check(name in BENCHMARK_NAMES, "benchmark.name", f"unknown benchmark {name!r}; choose from {list(BENCHMARK_NAMES)}")
    dim = _typed(bench, "benchmark", "dim", int, required=True)
    _check(dim >= 1, "benchmark.dim", "must be at least 1")
    params = {}
    for key, kind in (("m", int), ("lengthscale", float), ("seed", int), ("n_features", int)):
        if key in bench:
            params[key] = _typed(bench, "benchmark", key, kind)
    if "lengthscale" in params:
        _check(params["lengthscale"] > 0, "benchmark.lengthscale", "must be positive")
    if "n_features" in params:
        _check(params["n_features"] >= 256, "benchmark.n_features", "must be at least 256")

    variants = exp.get("variants")
    _check(
        isinstance(variants, list) and len(variants) > 0 and all(isinstance(v, str) for v in variants),
        "experiment.variants",
        "expected a non-empty list of variant names",
    )
    known = [v.value for v in OptimizerVariant]
    for v in variants:
        _check(v in known, "experiment.variants", f"unknown variant {v!r}; choose from {known}")
    _check(len(set(variants)) == len(variants), "experiment.variants", "duplicate variant")

    budget = _typed(exp, "experiment", "budget", int, required=True)
    n_init = _typed(exp, "experiment", "n_init", int, 10)
    _check(n_init >= 1, "experiment.n_init", "must be at least 1")
    _check(budget > n_init, "experiment.budget", f"must exceed n_init={n_init}")
    refit_every = _typed(exp, "experiment", "refit_every", int, 10)
    _check(refit_every >= 1, "experiment.refit_every", "must be at least 1")
    n_rep = _typed(exp, "experiment", "n_replicates", int, 10)
    _check(n_rep >= 1, "experiment.n_replicates", "must be at least 1")
    base_seed = _typed(exp, "experiment", "base_seed", int, 0)
    _check(base_seed >= 0, "experiment.base_seed", "must be non-negative")
    L0 = _typed(exp, "experiment", "L0", float, 0.8)
    _check(L_MIN <= L0 <= L_MAX, "experiment.L0", f"must lie in [{L_MIN}, {L_MAX}]")
    out = _typed(exp, "experiment", "output_dir", str, required=True)
    output_dir = Path(out)
    if not output_dir.is_absolute():
        output_dir = Path(base_dir) / output_dir

    fit_restarts = _typed(opt, "optimizer", "fit_restarts", int, 4)
    _check(fit_restarts >= 1, "optimizer.fit_restarts", "must be at least 1")
    n_raw = _typed(opt, "optimizer", "n_raw", int, 20)
    n_starts = _typed(opt, "optimizer", "n_starts", int, 5)
    _check(1 <= n_starts <= n_raw, "optimizer.n_starts", "need 1 <= n_starts <= n_raw")
    acq_max_iter = _typed(opt, "optimizer", "acq_max_iter", int, 20)
    _check(acq_max_iter >= 1, "optimizer.acq_max_iter", "must be at least 1")
    threshold = _typed(opt, "optimizer", "success_threshold", float, 0.0)
    _check(threshold >= 0, "optimizer.success_threshold", "must be non-negative")

    return ExperimentConfig(
        benchmark=name,
        dim=dim,
        variants=tuple(variants),
        budget=budget,
        output_dir=output_dir,
        n_init=n_init,
        refit_every=refit_every,
        n_replicates=n_rep,
        base_seed=base_seed,
        L0=L0,
        name=_typed(exp, "experiment", "name", str, "experiment"),
        benchmark_params=params,
        success_threshold=threshold,
        weighted_box=_typed(opt, "optimizer", "weighted_box", bool, False),
        fit_restarts=fit_restarts,
        n_raw=n_raw,
        n_starts=n_starts,
        acq_max_iter=acq_max_iter,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: no such file") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.parent)


# ---------------------------------------------------------------- traces


def trace_filename(variant: str, replicate: int) -> str:
    return f"trace_{variant}_r{replicate:03d}.csv"


def write_trace(record: RunRecord, path) -> None:
    dim = record.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(TRACE_FIXED_COLUMNS) + [f"x_{j}" for j in range(dim)])
        for i in range(record.n_rows):
            row = [
                i,
                record.y[i],
                record.best_so_far[i],
                record.L_at_proposal[i],
                bool(record.restart_flag[i]),
            ]
            w.writerow([fmt(v) for v in row] + [fmt(v) for v in record.x[i]])


def load_trace(path) -> tuple[str, int, RunRecord]:
    """Read a trace CSV back; variant and replicate come from the file name."""
    path = Path(path)
    m = TRACE_NAME.search(path.name)
    if m is None:
        raise ValueError(f"{path.name}: not a trace file name")
    variant, rep = m.group("variant"), int(m.group("rep"))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header[: len(TRACE_FIXED_COLUMNS)]) != TRACE_FIXED_COLUMNS:
        raise ValueError(f"{path.name}: unexpected header")
    arr = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    record = RunRecord(
        seed=None,
        variant=variant,
        x=arr[:, len(TRACE_FIXED_COLUMNS):],
        y=arr[:, 1],
        best_so_far=arr[:, 2],
        L_at_proposal=arr[:, 3],
        restart_flag=arr[:, 4].astype(bool),
    )
    return variant, rep, record


# ---------------------------------------------------------------- summaries


@dataclass(frozen=True)
class FinalStats:
    values: np.ndarray
    median: float
    stderr: float
    mean: float
    q25: float
    q75: float


@dataclass(frozen=True)
class SummaryTable:
    """Per-variant convergence statistics and final-best distributions."""

    variants: tuple
    curves: dict
    final: dict
    warnings: tuple = ()


def _stats(values: np.ndarray, axis=0):
    n = values.shape[axis]
    median = np.median(values, axis=axis)
    mean = np.mean(values, axis=axis)
    if n > 1:
        stderr = np.std(values, axis=axis, ddof=1) / math.sqrt(n)
    else:
        stderr = np.zeros_like(mean)
    q25, q75 = np.percentile(values, [25, 75], axis=axis)
    return median, stderr, mean, q25, q75


def summarize(traces) -> SummaryTable:
    """Median, standard error, mean and quartiles of best-so-far per variant.

    ``traces`` is an iterable of ``RunRecord``; grouping is by ``variant``
    in order of first appearance. Invalid (partial) records are skipped.

    Raises
    ------
    MismatchedTraces
        If the records of one variant differ in length.
    """
    groups: dict = {}
    for rec in traces:
        if not rec.valid:
            continue
        key = rec.variant.value if isinstance(rec.variant, OptimizerVariant) else str(rec.variant)
        groups.setdefault(key, []).append(np.asarray(rec.best_so_far, dtype=float))
    curves, final, warnings = {}, {}, []
    for variant, runs in groups.items():
        lengths = {r.shape[0] for r in runs}
        if len(lengths) != 1:
            raise MismatchedTraces(f"{variant}: trace lengths differ {sorted(lengths)}")
        stack = np.vstack(runs)
        if stack.shape[0] == 1:
            warnings.append(f"{variant}: single replicate, standard error reported as 0")
        median, stderr, mean, q25, q75 = _stats(stack)
        curves[variant] = {"median": median, "stderr": stderr, "mean": mean, "q25": q25, "q75": q75}
        last = stack[:, -1]
        fm, fs, fmean, f25, f75 = (float(v) for v in _stats(last))
        final[variant] = FinalStats(last, fm, fs, fmean, f25, f75)
    return SummaryTable(tuple(groups), curves, final, tuple(warnings))


def write_summary(table: SummaryTable, summary_csv, final_csv, summary_json, extra=None) -> None:
    with open(summary_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for variant in table.variants:
            c = table.curves[variant]
            n = len(table.final[variant].values)
            for i in range(c["median"].shape[0]):
                w.writerow(
                    [variant, i, n]
                    + [fmt(c[k][i]) for k in ("median", "stderr", "mean", "q25", "q75")]
                )
    with open(final_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FINAL_COLUMNS)
        for variant in table.variants:
            for r, v in enumerate(table.final[variant].values):
                w.writerow([variant, r, fmt(v)])
    payload = dict(extra or {})
    payload["final_best"] = {
        v: {
            "n_replicates": int(len(s.values)),
            "median": s.median,
            "stderr": s.stderr,
            "mean": s.mean,
            "q25": s.q25,
            "q75": s.q75,
            "values": [float(x) for x in s.values],
        }
        for v, s in table.final.items()
    }
    payload["warnings"] = list(table.warnings)
    with open(summary_json, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------- running


def _run_one(config: ExperimentConfig, variant: str, replicate: int) -> RunRecord:
    with threadpool_limits(limits=1):
        try:
            return run_optimizer(
                config.make_benchmark(),
                config.dim,
                variant,
                config.budget,
                config.n_init,
                config.base_seed + replicate,
                config.refit_every,
                config.optimizer_config(),
            )
        except ObjectiveFailure as exc:
            log.error("%s replicate %d aborted: %s", variant, replicate, exc)
            return exc.record


@dataclass(frozen=True)
class ExperimentResult:
    records: dict
    summary: SummaryTable
    trace_paths: tuple
    summary_csv: Path
    final_csv: Path
    summary_json: Path


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Run every (variant, replicate) pair and persist traces and summaries.

    Replicate ``r`` uses seed ``base_seed + r`` for every variant, so all
    variants share the initial design. Runs are independent and may fan out
    over ``jobs`` worker processes; outputs do not depend on ``jobs``.
    """
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(v, r) for r in range(config.n_replicates) for v in config.variants]
    if jobs == 1:
        results = [_run_one(config, v, r) for v, r in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, config, v, r) for v, r in tasks]
            results = [f.result() for f in futures]
    records, paths, invalid = {}, [], []
    for (variant, rep), rec in zip(tasks, results):
        records[(variant, rep)] = rec
        path = out / trace_filename(variant, rep)
        write_trace(rec, path)
        paths.append(path)
        if not rec.valid:
            invalid.append({"variant": variant, "replicate": rep, "rows": int(rec.n_rows)})
    ordered = [records[(v, r)] for v in config.variants for r in range(config.n_replicates)]
    table = summarize(ordered)
    extra = {
        "name": config.name,
        "benchmark": config.benchmark,
        "dim": config.dim,
        "budget": config.budget,
        "n_init": config.n_init,
        "refit_every": config.refit_every,
        "n_replicates": config.n_replicates,
        "base_seed": config.base_seed,
        "L0": config.L0,
        "variants": list(config.variants),
        "invalid_runs": invalid,
    }
    summary_csv, final_csv, summary_json = (
        out / "summary.csv",
        out / "final_best.csv",
        out / "summary.json",
    )
    write_summary(table, summary_csv, final_csv, summary_json, extra)
    return ExperimentResult(records, table, tuple(paths), summary_csv, final_csv, summary_json)


# ---------------------------------------------------------------- verification suites

DISTANCE_GRID = tuple((D, L) for D in (2, 20, 50, 100) for L in (0.1, 0.5, 1.0))
INVARIANCE_GRID = tuple((D, L) for D in (10, 100) for L in (0.1, 0.3, 0.8))
VERIFY_COLUMNS = ("suite", "D", "L", "value", "lower", "upper", "passed")


def verify_propositions(n_pairs: int = 100_000, seed: int = 0, n_design: int = 64, c: float = 0.3):
    """Distance-bound and Gram-invariance checks over the standard grids.

    Returns rows matching :data:`VERIFY_COLUMNS`. Distance rows pass when
    the Monte Carlo mean lies within the bounds widened by three standard
    errors. Invariance rows report the max Gram difference (``upper`` is
    the 1e-12 tolerance) and are followed by a row for the gap between the
    two information gains (tolerance 1e-10 nats).
    """
    rows = []
    for D, L in DISTANCE_GRID:
        lo, hi = expected_distance_bounds(D, L)
        est, se = mc_expected_distance(D, L, n_pairs, seed)
        rows.append(("distance", D, L, est, lo, hi, lo - 3 * se <= est <= hi + 3 * se))
    for D, L in INVARIANCE_GRID:
        diff, ig, ig_local = scaling_invariance_details(D, L, n_design, c, seed)
        rows.append(("gram_invariance", D, L, diff, 0.0, 1e-12, diff <= 1e-12))
        gap = abs(ig - ig_local)
        rows.append(("ig_invariance", D, L, gap, 0.0, 1e-10, gap <= 1e-10))
    return rows
