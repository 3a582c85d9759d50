import csv
import math

import numpy as np
import pytest
import yaml

import mglbo.harness as harness
from conftest import quadratic_cloud
from mglbo.cli import main
from mglbo.harness import (
    ExperimentConfig,
    bootstrap_median_std,
    load_config,
    read_trace,
    run_experiment,
    summarize,
    trace_header,
)
from mglbo.lengthscale import length_scale_lower_bound

FAST_BO = {"candidates_per_dim": 40, "n_refine": 2, "refine_iterations": 40}
FAST_OPT = {"n_samples": 60, "loo_subsample": 30}


def small_config(out, **kw):
    base = dict(
        benchmarks=["gp1d_l0.1_s0"],
        methods=["SE_ar", "SE_fixed"],
        repetitions=2,
        iterations=4,
        output_dir=str(out),
        bo=FAST_BO,
        optimal=FAST_OPT,
    )
    base.update(kw)
    return load_config(environ={}, **base)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestLoadConfig:
    def test_defaults(self):
        cfg = load_config(environ={})
        assert cfg.repetitions == 32 and cfg.bo["alpha_ratio_threshold"] == 1.5
        assert cfg.bo["variance_downscale"] == 100.0 and cfg.bo["min_correlation"] == 0.2

    def test_precedence(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump({"repetitions": 4, "base_seed": 9, "bo": {"alpha_ratio_threshold": 2.0}}))
        env = {"MGLBO_REPETITIONS": "6", "MGLBO_BO_RECOMPUTE_REFERENCE": "true"}
        cfg = load_config(str(path), environ=env, base_seed=None, jobs=3)
        assert cfg.repetitions == 6 and cfg.base_seed == 9 and cfg.jobs == 3
        assert cfg.bo["alpha_ratio_threshold"] == 2.0 and cfg.bo["recompute_reference"] is True
        assert load_config(str(path), environ=env, repetitions=2).repetitions == 2

    def test_list_from_environment(self):
        cfg = load_config(environ={"MGLBO_BENCHMARKS": "branin, hartmann3"})
        assert cfg.benchmarks == ["branin", "hartmann3"]

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump({"bo": {"no_such_knob": 1}}))
        with pytest.raises(KeyError):
            load_config(str(path), environ={})

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(repetitions=0)
        with pytest.raises(ValueError):
            ExperimentConfig(methods=["EI_magic"])
        with pytest.raises(KeyError):
            ExperimentConfig(benchmarks=["nope"])


class TestBootstrap:
    def test_constant_values(self):
        assert bootstrap_median_std([2.0] * 7) == (2.0, 0.0)

    def test_single_value(self):
        assert bootstrap_median_std([-3.0]) == (-3.0, 0.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            bootstrap_median_std([])

    def test_against_independent_resampler(self):
        values = np.arange(1.0, 10.0)
        med, std = bootstrap_median_std(values, 4000, seed=1)
        rng = np.random.default_rng(999)
        ref = np.std([np.median(rng.choice(values, values.size)) for _ in range(4000)], ddof=1)
        assert med == 5.0
        assert std == pytest.approx(ref, rel=0.2)

    def test_seeded(self):
        v = [1.0, 4.0, 2.0, 8.0]
        assert bootstrap_median_std(v, seed=3) == bootstrap_median_std(v, seed=3)


@pytest.fixture(scope="module")
def result(tmp_path_factory):
    return run_experiment(small_config(tmp_path_factory.mktemp("exp")))


class TestExperiment:
    def test_manifest_complete(self, result):
        rows = list(csv.DictReader(open(result.output_dir / "manifest.csv")))
        assert len(rows) == 4 and all(r["status"] == "ok" for r in rows)
        assert {(r["method"], r["seed"]) for r in rows} == {(m, s) for m in ("SE_ar", "SE_fixed") for s in ("0", "1")}
        assert result.ok

    def test_trace_files(self, result):
        for row in result.manifest:
            rows = read_csv(result.output_dir / row["trace_file"])
            assert rows[0] == trace_header(1)
            assert len(rows) == 1 + 3 + 4

    def test_trace_content(self, result):
        rows = read_trace(result.output_dir / "traces" / "gp1d_l0.1_s0__SE_ar__seed0.csv")
        best = [float(r["best_so_far"]) for r in rows]
        assert best == list(np.minimum.accumulate([float(r["y"]) for r in rows]))
        ls = [float(r["length_scale"]) for r in rows[3:]]
        assert all(a >= b for a, b in zip(ls, ls[1:]))
        assert all(l >= length_scale_lower_bound(1, n, 0.2) or l == 1.0 for n, l in enumerate(ls, start=3))

    def test_summary_matches_traces(self, result):
        out = result.output_dir
        summary = list(csv.DictReader(open(out / "summaries" / "gp1d_l0.1_s0__SE_ar.csv")))
        assert [int(r["iteration"]) for r in summary] == [1, 2, 3, 4]
        traces = [read_trace(out / "traces" / f"gp1d_l0.1_s0__SE_ar__seed{s}.csv") for s in (0, 1)]
        for row in summary:
            it = int(row["iteration"])
            logs = [
                math.log10(max(float(r["immediate_regret"]), 1e-16))
                for t in traces for r in t if int(r["iteration"]) == it
            ]
            assert float(row["log10_median_IR"]) == pytest.approx(np.median(logs), abs=1e-15)
            assert int(row["n_runs"]) == 2

    def test_config_written(self, result):
        saved = yaml.safe_load((result.output_dir / "config.yaml").read_text())
        assert saved["repetitions"] == 2 and saved["bo"]["candidates_per_dim"] == 40

    def test_rerun_byte_identical(self, result, tmp_path):
        other = run_experiment(small_config(tmp_path))
        for path in sorted(result.output_dir.rglob("*.csv")):
            rel = path.relative_to(result.output_dir)
            assert (tmp_path / rel).read_bytes() == path.read_bytes(), rel
        assert other.ok

    def test_summarize_is_idempotent(self, result):
        path = result.output_dir / "summaries" / "gp1d_l0.1_s0__SE_fixed.csv"
        before = path.read_bytes()
        summarize(result.output_dir)
        assert path.read_bytes() == before


class TestFailureIsolation:
    def test_failed_run_is_recorded(self, tmp_path, monkeypatch):
        real = harness.run_bo

        def flaky(objective, dim, cfg, opt):
            if cfg.seed == 1:
                raise RuntimeError("boom")
            return real(objective, dim, cfg, opt)

        monkeypatch.setattr(harness, "run_bo", flaky)
        res = run_experiment(small_config(tmp_path, methods=["SE_ar"]))
        status = {r["seed"]: r["status"] for r in res.manifest}
        assert status == {0: "ok", 1: "error"} and not res.ok
        assert "boom" in res.manifest[1]["error"] and res.manifest[1]["trace_file"] == ""
        assert (tmp_path / "summaries" / "gp1d_l0.1_s0__SE_ar.csv").exists()


class TestCli:
    def test_lower_bound(self, capsys):
        assert main(["lower-bound", "--dim", "1", "--n-max", "5"]) == 0
        rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        assert len(rows) == 5
        assert float(rows[3]["min_distance"]) == 0.25
        assert float(rows[3]["length_scale_lower_bound"]) == pytest.approx(length_scale_lower_bound(1, 4, 0.2), rel=1e-15)

    def test_regions(self, tmp_path, capsys):
        X, y, H, m, y0 = quadratic_cloud(2, seed=2)
        path = tmp_path / "cloud.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x0", "x1", "y"])
            w.writerows(np.column_stack([X, y]).tolist())
        assert main(["regions", "--input", str(path)]) == 0
        rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        assert len(rows) == 1
        assert [float(rows[0]["min0"]), float(rows[0]["min1"])] == pytest.approx(m.tolist(), abs=1e-6)
        assert float(rows[0]["predicted_min_value"]) == pytest.approx(y0, abs=1e-8)

    def test_regions_empty_input(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("x0,y\n")
        assert main(["regions", "--input", str(path)]) == 1

    def test_run_and_summarize(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(yaml.safe_dump({"bo": FAST_BO, "optimal": FAST_OPT}))
        out = tmp_path / "out"
        argv = ["run", "--config", str(cfg), "--out", str(out), "--reps", "1", "--iterations", "2",
                "--benchmark", "gp1d_l0.1_s3", "--method", "SE_loocv", "--method", "MGL_ar"]
        assert main(argv) == 0
        assert "2 runs, 0 failed" in capsys.readouterr().out
        assert main(["summarize", "--out", str(out)]) == 0
        printed = capsys.readouterr().out.split()
        assert sorted(p.rsplit("/", 1)[1] for p in printed) == ["gp1d_l0.1_s3__MGL_ar.csv", "gp1d_l0.1_s3__SE_loocv.csv"]

    def test_run_failure_exit_code(self, tmp_path, monkeypatch, capsys):
        def boom(*a, **k):
            raise RuntimeError("boom")

        monkeypatch.setattr(harness, "run_bo", boom)
        argv = ["run", "--out", str(tmp_path), "--reps", "1", "--iterations", "1",
                "--benchmark", "gp1d_l0.1_s3", "--method", "SE_ar"]
        assert main(argv) == 1
