"""Command-line entry point: ``adascale {run,mig,verify,bench,summarize}``."""

from __future__ import annotations

import argparse
import csv
import glob
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, mig
from .benchmarks import BENCHMARK_NAMES, Benchmark
from .exceptions import AdaScaleError, ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adascale", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a TOML config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    m = sub.add_parser("mig", help="information gain curves of Sobol designs")
    m.add_argument("--dims", type=_int_list, default=[20, 40, 60, 80, 100])
    m.add_argument("--sides", type=_float_list, default=[0.8, 0.4, 0.2, 0.1])
    m.add_argument("--lengthscale", type=float, default=0.5)
    m.add_argument("--noise", type=float, default=0.01)
    m.add_argument("--nmax", type=int, default=200)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True, type=Path)

    v = sub.add_parser("verify", help="numerical verification suites")
    vsub = v.add_subparsers(dest="suite", required=True)
    props = vsub.add_parser("props", help="distance bounds and Gram invariance")
    props.add_argument("--out", required=True, type=Path)
    props.add_argument("--pairs", type=int, default=100_000)
    props.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="benchmark utilities")
    bsub = b.add_subparsers(dest="action", required=True)
    ev = bsub.add_parser("eval", help="evaluate a benchmark at one normalized point")
    ev.add_argument("--name", required=True, choices=BENCHMARK_NAMES)
    ev.add_argument("--dim", required=True, type=int)
    ev.add_argument("--point", required=True, type=_float_list, help="D values, or one value repeated")
    ev.add_argument("--lengthscale", type=float, default=0.1, help="GpPriorSample only")
    ev.add_argument("--seed", type=int, default=0, help="GpPriorSample only")

    s = sub.add_parser("summarize", help="recompute summaries from trace files")
    s.add_argument("--traces", required=True, help="glob matching trace_*.csv files")
    s.add_argument("--out", required=True, type=Path)
    return p


def cmd_run(args) -> int:
    config = harness.load_config(args.config)
    result = harness.run_experiment(config, jobs=args.jobs)
    for variant in result.summary.variants:
        s = result.summary.final[variant]
        print(f"{variant}: median final best {s.median:.6g} (stderr {s.stderr:.3g}, n={len(s.values)})")
    for w in result.summary.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {len(result.trace_paths)} traces and summaries to {config.output_dir}")
    return EXIT_OK


def cmd_mig(args) -> int:
    if args.nmax < 1:
        raise ConfigError("--nmax: must be at least 1")
    grid = range(1, args.nmax + 1)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(mig.CSV_COLUMNS)
        for D in args.dims:
            for L in args.sides:
                curve = mig.sobol_mig_curve(D, L, args.lengthscale, args.noise, grid, args.seed)
                for row in curve.rows():
                    w.writerow([harness.fmt(v) for v in row])
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    rows = harness.verify_propositions(n_pairs=args.pairs, seed=args.seed)
    ok = True
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(harness.VERIFY_COLUMNS)
        for row in rows:
            w.writerow([harness.fmt(v) for v in row])
            suite, D, L, value, lo, hi, passed = row
            ok &= bool(passed)
            print(f"{'PASS' if passed else 'FAIL'} {suite} D={D} L={L:g} value={value:.6g} [{lo:.6g}, {hi:.6g}]")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_bench(args) -> int:
    point = np.asarray(args.point, dtype=float)
    if point.size == 1:
        point = np.full(args.dim, point[0])
    if point.size != args.dim:
        raise ConfigError(f"--point: expected {args.dim} values, got {point.size}")
    params = {"lengthscale": args.lengthscale, "seed": args.seed} if args.name == "GpPriorSample" else {}
    print(harness.fmt(Benchmark(args.name, args.dim, params)(point)))
    return EXIT_OK


def cmd_summarize(args) -> int:
    paths = sorted(glob.glob(args.traces))
    if not paths:
        raise ConfigError(f"--traces: no files match {args.traces!r}")
    records = []
    for path in paths:
        _, _, rec = harness.load_trace(path)
        records.append(rec)
    table = harness.summarize(records)
    out = Path(args.out)
    harness.write_summary(
        table, out, out.with_name(out.stem + "_final.csv"), out.with_suffix(".json")
    )
    for w in table.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"summarized {len(paths)} traces into {out}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "mig": cmd_mig,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "summarize": cmd_summarize,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (AdaScaleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
