"""Command line entry point: ``mglbo run | summarize | lower-bound | regions``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .gp import Dataset
from .harness import fmt, load_config, run_experiment, summarize
from .lengthscale import equivalent_min_distance, length_scale_lower_bound
from .regions import LmriConfig, identify_regions


def _cmd_run(args) -> int:
    cfg = load_config(
        args.config,
        output_dir=args.out,
        base_seed=args.seed,
        repetitions=args.reps,
        jobs=args.jobs,
        iterations=args.iterations,
        benchmarks=args.benchmark,
        methods=args.method,
    )
    result = run_experiment(cfg)
    n_bad = sum(row["status"] != "ok" for row in result.manifest)
    print(f"{len(result.manifest)} runs, {n_bad} failed; output in {result.output_dir}")
    return 0 if result.ok else 1


def _cmd_summarize(args) -> int:
    paths = summarize(args.out, args.resamples, args.seed)
    for p in paths:
        print(p)
    return 0


def _cmd_lower_bound(args) -> int:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["n", "min_distance", "length_scale_lower_bound"])
    for n in range(1, args.n_max + 1):
        writer.writerow([
            n,
            fmt(equivalent_min_distance(args.dim, n)),
            fmt(length_scale_lower_bound(args.dim, n, args.min_correlation)),
        ])
    return 0


def _cmd_regions(args) -> int:
    with open(args.input, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("empty point cloud", file=sys.stderr)
        return 1
    xcols = sorted((c for c in rows[0] if c.startswith("x")), key=lambda c: int(c[1:]))
    X = np.array([[float(r[c]) for c in xcols] for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    cfg = LmriConfig(
        epsilon=args.epsilon,
        ignorance_threshold=args.ignorance_threshold,
        continue_on_reject=args.continue_on_reject,
        paper_literal_minimizer=args.paper_literal_minimizer,
    )
    regions = identify_regions(Dataset(X, y), cfg)
    d = X.shape[1]
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(
        ["region", "radius", "predicted_min_value", "n_members"]
        + [f"center{i}" for i in range(d)]
        + [f"min{i}" for i in range(d)]
    )
    for i, reg in enumerate(regions):
        writer.writerow(
            [i, fmt(reg.radius), fmt(reg.predicted_min_value), len(reg.member_indices)]
            + [fmt(float(v)) for v in reg.center]
            + [fmt(float(v)) for v in reg.predicted_min_point]
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mglbo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment")
    run.add_argument("--config", help="YAML configuration file")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--reps", type=int, help="repetitions per cell")
    run.add_argument("--jobs", type=int, help="worker processes")
    run.add_argument("--iterations", type=int, help="BO iterations per run")
    run.add_argument("--benchmark", action="append", help="benchmark name (repeatable)")
    run.add_argument("--method", action="append", help="kernel mode (repeatable)")
    run.set_defaults(func=_cmd_run)

    summ = sub.add_parser("summarize", help="recompute summaries from trace files")
    summ.add_argument("--out", required=True, help="experiment output directory")
    summ.add_argument("--resamples", type=int, default=1000)
    summ.add_argument("--seed", type=int, default=0)
    summ.set_defaults(func=_cmd_summarize)

    lb = sub.add_parser("lower-bound", help="print the length-scale lower bound table")
    lb.add_argument("--dim", type=int, required=True)
    lb.add_argument("--min-correlation", type=float, default=0.2)
    lb.add_argument("--n-max", type=int, default=50)
    lb.set_defaults(func=_cmd_lower_bound)

    reg = sub.add_parser("regions", help="run local minimum region identification on a CSV point cloud")
    reg.add_argument("--input", required=True, help="CSV with columns x0..x<d-1>,y in the unit cube")
    reg.add_argument("--epsilon", type=float, default=1e-9)
    reg.add_argument("--ignorance-threshold", type=float, default=0.05)
    reg.add_argument("--continue-on-reject", action="store_true")
    reg.add_argument("--paper-literal-minimizer", action="store_true")
    reg.set_defaults(func=_cmd_regions)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
