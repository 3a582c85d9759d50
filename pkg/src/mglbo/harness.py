"""Seeded experiment runner writing regret traces and bootstrap summaries as CSV.

Layout of an output directory::

    traces/<benchmark>__<method>__seed<seed>.csv   one file per run
    summaries/<benchmark>__<method>.csv            one file per cell
    manifest.csv                                   status of every run
    config.yaml                                    resolved configuration
"""

from __future__ import annotations

import copy
import csv
import io
import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .acquisition import SearchBudget
from .benchmarks import get_benchmark, is_benchmark_name, optimal_hyperparameters
from .bo import BoConfig, CoolDownConfig, KernelMode, RunTrace, run_bo
from .errors import ObjectiveFailure
from .gp import HyperEstimate
from .regions import LmriConfig

log = logging.getLogger(__name__)

ENV_PREFIX = "MGLBO_"
IR_FLOOR = 1e-16
TRACE_TAIL = ["y", "best_so_far", "immediate_regret", "length_scale", "alpha_ratio", "region_count", "reduced"]
SUMMARY_HEADER = ["benchmark", "method", "iteration", "log10_median_IR", "median_std", "n_runs"]

DEFAULTS = {
    "benchmarks": ["quadratic2d"],
    "methods": ["MGL_ar", "SE_fixed"],
    "repetitions": 32,
    "iterations": None,
    "base_seed": 0,
    "bootstrap_resamples": 1000,
    "output_dir": "results",
    "jobs": 1,
    "exp_variant": "paper",
    "bo": {
        "initial_design_size": 3,
        "variance_downscale": 100.0,
        "initial_length_scale": 1.0,
        "min_correlation": 0.2,
        "alpha_ratio_threshold": 1.5,
        "recompute_reference": False,
        "length_scale_floor": 1e-3,
        "lmri_epsilon": 1e-9,
        "ignorance_threshold": 0.05,
        "continue_on_reject": False,
        "paper_literal_minimizer": False,
        "detect_regions": True,
        "candidates_per_dim": 250,
        "n_refine": 5,
        "refine_iterations": 100,
    },
    "optimal": {"n_samples": 1000, "loo_subsample": 300},
}


@dataclass
class ExperimentConfig:
    benchmarks: list = field(default_factory=lambda: list(DEFAULTS["benchmarks"]))
    methods: list = field(default_factory=lambda: list(DEFAULTS["methods"]))
    repetitions: int = 32
    iterations: Optional[int] = None
    base_seed: int = 0
    bootstrap_resamples: int = 1000
    output_dir: str = "results"
    jobs: int = 1
    exp_variant: str = "paper"
    bo: dict = field(default_factory=lambda: dict(DEFAULTS["bo"]))
    optimal: dict = field(default_factory=lambda: dict(DEFAULTS["optimal"]))

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        self.methods = [KernelMode(m).value for m in self.methods]
        unknown = [n for n in self.benchmarks if not is_benchmark_name(n)]
        if unknown:
            raise KeyError(f"unknown benchmarks: {unknown}")

    def as_dict(self) -> dict:
        return {
            "benchmarks": list(self.benchmarks),
            "methods": list(self.methods),
            "repetitions": self.repetitions,
            "iterations": self.iterations,
            "base_seed": self.base_seed,
            "bootstrap_resamples": self.bootstrap_resamples,
            "output_dir": str(self.output_dir),
            "jobs": self.jobs,
            "exp_variant": self.exp_variant,
            "bo": dict(self.bo),
            "optimal": dict(self.optimal),
        }


def _coerce(value, default):
    if isinstance(default, bool):
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if isinstance(default, int) and not isinstance(default, bool):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, list):
        if isinstance(value, str):
            return [v.strip() for v in value.split(",") if v.strip()]
        return list(value)
    if default is None and value is not None:
        if isinstance(value, str) and value.strip().lower() in ("", "none", "null"):
            return None
        return int(value)
    return value


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in base:
            raise KeyError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = _coerce(value, base[key])
    return out


def _env_overrides(environ) -> dict:
    out = {}
    for key, default in DEFAULTS.items():
        if isinstance(default, dict):
            for sub in default:
                name = f"{ENV_PREFIX}{key}_{sub}".upper()
                if name in environ:
                    out.setdefault(key, {})[sub] = environ[name]
        else:
            name = f"{ENV_PREFIX}{key}".upper()
            if name in environ:
                out[key] = environ[name]
    return out


def load_config(path: Optional[str] = None, environ=None, **overrides) -> ExperimentConfig:
    """Defaults, then the YAML file, then ``MGLBO_*`` variables, then keyword overrides.

    Nested keys map to variables like ``MGLBO_BO_ALPHA_RATIO_THRESHOLD``.
    """
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            raw = _merge(raw, yaml.safe_load(fh) or {})
    raw = _merge(raw, _env_overrides(os.environ if environ is None else environ))
    raw = _merge(raw, {k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**raw)


def bo_config(cfg: ExperimentConfig, method: str, seed: int, iterations: int,
              fixed_hypers: Optional[HyperEstimate] = None) -> BoConfig:
    b = cfg.bo
    return BoConfig(
        max_iterations=iterations,
        kernel_mode=KernelMode(method),
        initial_design_size=b["initial_design_size"],
        seed=seed,
        cool_down=CoolDownConfig(
            initial_length_scale=b["initial_length_scale"],
            min_correlation=b["min_correlation"],
            alpha_ratio_threshold=b["alpha_ratio_threshold"],
            recompute_reference=b["recompute_reference"],
            floor=b["length_scale_floor"],
        ),
        lmri=LmriConfig(
            epsilon=b["lmri_epsilon"],
            ignorance_threshold=b["ignorance_threshold"],
            continue_on_reject=b["continue_on_reject"],
            paper_literal_minimizer=b["paper_literal_minimizer"],
        ),
        variance_downscale=b["variance_downscale"],
        search=SearchBudget(
            candidates_per_dim=b["candidates_per_dim"],
            n_refine=b["n_refine"],
            refine_iterations=b["refine_iterations"],
        ),
        fixed_hypers=fixed_hypers if KernelMode(method) is KernelMode.SE_FIXED else None,
        detect_regions=b["detect_regions"],
    )


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def trace_header(dim: int) -> list:
    return ["iteration"] + [f"x{i}" for i in range(dim)] + TRACE_TAIL


def write_trace(trace: RunTrace, path: Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trace_header(trace.dim))
    for r in trace.records:
        writer.writerow(
            [fmt(r.iteration)]
            + [fmt(float(v)) for v in r.x]
            + [fmt(r.y), fmt(r.best_so_far), fmt(r.immediate_regret), fmt(r.length_scale),
               fmt(r.alpha_ratio), fmt(int(r.region_count)), fmt(bool(r.reduced))]
        )
    path.write_text(buf.getvalue())


def read_trace(path: Path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def bootstrap_median_std(values, resamples: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Median of ``values`` and the standard deviation of bootstrap medians."""
    v = np.asarray(values, float)
    if v.size == 0:
        raise ValueError("need at least one value")
    med = float(np.median(v))
    if v.size == 1 or np.all(v == v[0]):
        return med, 0.0
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(resamples, v.size))
    meds = np.median(v[idx], axis=1)
    return med, float(np.std(meds, ddof=1)) if resamples > 1 else 0.0


def log10_regret(ir: float) -> float:
    return math.log10(max(ir, IR_FLOOR))


def _parse_trace_name(name: str):
    parts = name[: -len(".csv")].split("__")
    if len(parts) != 3 or not parts[2].startswith("seed"):
        return None
    return parts[0], parts[1], int(parts[2][len("seed"):])


def summarize(out_dir, resamples: int = 1000, seed: int = 0) -> list:
    """Recompute per-cell summaries from the trace files under ``out_dir``."""
    out_dir = Path(out_dir)
    cells = defaultdict(dict)
    for path in sorted((out_dir / "traces").glob("*.csv")):
        parsed = _parse_trace_name(path.name)
        if parsed is None:
            continue
        bench, method, s = parsed
        cells[(bench, method)][s] = read_trace(path)

    (out_dir / "summaries").mkdir(parents=True, exist_ok=True)
    written = []
    for (bench, method), runs in sorted(cells.items()):
        per_iter = defaultdict(list)
        for s in sorted(runs):
            for row in runs[s]:
                it = int(row["iteration"])
                if it >= 1:
                    per_iter[it].append(log10_regret(float(row["immediate_regret"])))
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for it in sorted(per_iter):
            bs_seed = int(np.random.SeedSequence([seed, it]).generate_state(1)[0])
            med, std = bootstrap_median_std(per_iter[it], resamples, bs_seed)
            writer.writerow([bench, method, it, fmt(med), fmt(std), len(per_iter[it])])
        path = out_dir / "summaries" / f"{bench}__{method}.csv"
        path.write_text(buf.getvalue())
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def _run_one(task: dict) -> dict:
    cfg = ExperimentConfig(**task["config"])
    bench = get_benchmark(task["benchmark"], cfg.exp_variant)
    hypers = task["hypers"]
    bo_cfg = bo_config(cfg, task["method"], task["seed"], task["iterations"],
                       HyperEstimate(**hypers) if hypers else None)
    path = Path(task["trace_path"])
    status, error = "ok", ""
    try:
        trace = run_bo(bench.unit_objective, bench.dim, bo_cfg, bench.known_optimum_value)
    except ObjectiveFailure as exc:
        trace, status, error = exc.trace, "error", str(exc)
    except Exception as exc:  # isolation: one bad run must not sink the experiment
        trace, status, error = None, "error", f"{type(exc).__name__}: {exc}"
    if trace is not None:
        write_trace(trace, path)
    return {
        "benchmark": task["benchmark"],
        "method": task["method"],
        "seed": task["seed"],
        "status": status,
        "trace_file": f"traces/{path.name}" if trace is not None else "",
        "error": error,
    }


@dataclass
class ExperimentResult:
    output_dir: Path
    manifest: list
    summaries: list

    @property
    def ok(self) -> bool:
        return all(row["status"] == "ok" for row in self.manifest)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    out = Path(cfg.output_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.as_dict(), sort_keys=True))

    tasks = []
    for name in cfg.benchmarks:
        bench = get_benchmark(name, cfg.exp_variant)
        iterations = cfg.iterations or bench.iterations
        hypers = None
        if KernelMode.SE_FIXED.value in cfg.methods:
            h = optimal_hyperparameters(
                bench, cfg.optimal["n_samples"], cfg.base_seed, cfg.optimal["loo_subsample"],
                cfg.bo["min_correlation"],
            )
            hypers = {"c_mu": h.c_mu, "sigma_f_sq": h.sigma_f_sq, "length_scale": h.length_scale, "method": h.method}
        for method in cfg.methods:
            for r in range(cfg.repetitions):
                seed = cfg.base_seed + r
                tasks.append({
                    "config": cfg.as_dict(),
                    "benchmark": name,
                    "method": method,
                    "seed": seed,
                    "iterations": iterations,
                    "hypers": hypers,
                    "trace_path": str(out / "traces" / f"{name}__{method}__seed{seed}.csv"),
                })

    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            manifest = list(pool.map(_run_one, tasks))
    else:
        manifest = [_run_one(t) for t in tasks]

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["benchmark", "method", "seed", "status", "trace_file", "error"],
                            lineterminator="\n")
    writer.writeheader()
    writer.writerows(manifest)
    (out / "manifest.csv").write_text(buf.getvalue())
    for row in manifest:
        if row["status"] != "ok":
            log.warning("run %s/%s seed %s failed: %s", row["benchmark"], row["method"], row["seed"], row["error"])

    summaries = summarize(out, cfg.bootstrap_resamples, cfg.base_seed)
    return ExperimentResult(out, manifest, summaries)
