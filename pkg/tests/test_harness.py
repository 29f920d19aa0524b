import json

import pytest

from moneygas.cli import main
from moneygas.config import ConfigError, build_model, load_config, validate_config
from moneygas.runner import compare_report, derive_seed, run_experiment

MODEL = {"kind": "cash_only", "n_agents": 50, "volume_y": 10.0}
RUN = {"policy": "equal", "total": 500.0, "steps": 60_000, "burn_in": 5_000, "thin": 500}


def simulate_config(seed=7, **extra):
    document = {"task": "simulate", "seed": seed, "model": dict(MODEL), "run": dict(RUN)}
    document.update(extra)
    return document


def write_config(tmp_path, document, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return path


class TestConfigValidation:
    def test_minimal_simulate_config(self, tmp_path):
        config = load_config(write_config(tmp_path, simulate_config()))
        assert config.task == "simulate"
        assert build_model(config.raw["model"]).n_agents == 50

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_n_agents(self):
        with pytest.raises(ConfigError, match="n_agents"):
            validate_config({"task": "analytic", "temperatures": [1.0],
                             "model": {"kind": "cash_only", "volume_y": 1.0}})

    def test_degenerate_restricted_model(self):
        with pytest.raises(ConfigError, match="degenerate"):
            validate_config(simulate_config(
                model={"kind": "restricted", "n_agents": 10, "overdraft": 0.0}))

    def test_unknown_fields_rejected_at_every_level(self):
        with pytest.raises(ConfigError, match="unknown"):
            validate_config(simulate_config(bogus=1))
        with pytest.raises(ConfigError, match="unknown"):
            validate_config(simulate_config(model={**MODEL, "volume_x": 2.0}))
        bad_run = dict(RUN, extra_knob=3)
        with pytest.raises(ConfigError, match="unknown"):
            validate_config(simulate_config(run=bad_run))

    def test_unknown_task(self):
        with pytest.raises(ConfigError, match="task"):
            validate_config({"task": "frobnicate"})

    def test_sweep_path_must_exist(self):
        with pytest.raises(ConfigError, match="sweep path"):
            validate_config({"task": "sweep", "base": simulate_config(),
                             "grid": {"run.nonexistent": [1, 2]}})


class TestSeeds:
    def test_deterministic_and_distinct(self):
        seeds = [derive_seed(123, i) for i in range(64)]
        assert seeds == [derive_seed(123, i) for i in range(64)]
        assert len(set(seeds)) == 64
        assert all(0 <= s < 2**64 for s in seeds)

    def test_base_seed_matters(self):
        assert derive_seed(1, 0) != derive_seed(2, 0)


class TestRunExperiment:
    def test_simulate_report_and_reproducibility(self, tmp_path):
        config = load_config(write_config(tmp_path, simulate_config()))
        first = run_experiment(config, tmp_path / "a")
        second = run_experiment(config, tmp_path / "b")
        assert first["files"] == second["files"]
        for name in first["files"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        report = json.loads((tmp_path / "a" / "report.json").read_text())
        assert report["closed_form_temperature"] == 10.0
        assert report["aggregate"]["rel_error"] < 0.03
        assert (tmp_path / "a" / "samples.csv").exists()
        assert (tmp_path / "a" / "histogram.tsv").exists()

    def test_replicas_get_derived_seeds(self, tmp_path):
        config = load_config(write_config(tmp_path, simulate_config(replicas=3)))
        manifest = run_experiment(config, tmp_path / "out")
        assert manifest["replica_seeds"] == [derive_seed(7, i) for i in range(3)]
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert len(report["replicas"]) == 3
        ks_values = {r["fits"]["x"]["ks_d"] for r in report["replicas"]}
        assert len(ks_values) == 3  # independent streams

    def test_parallel_workers_match_sequential(self, tmp_path):
        serial = load_config(write_config(tmp_path, simulate_config(replicas=2), "s.json"))
        parallel = load_config(
            write_config(tmp_path, simulate_config(replicas=2, workers=2), "p.json")
        )
        a = run_experiment(serial, tmp_path / "serial")
        b = run_experiment(parallel, tmp_path / "parallel")
        assert a["files"]["report.json"] != ""
        report_a = json.loads((tmp_path / "serial" / "report.json").read_text())
        report_b = json.loads((tmp_path / "parallel" / "report.json").read_text())
        assert report_a["replicas"] == report_b["replicas"]

    def test_sweep_manifest_entries(self, tmp_path):
        document = {
            "task": "sweep",
            "base": simulate_config(write_samples=False),
            "grid": {"run.total": [250.0]},
            "seeds": list(range(10)),
        }
        config = load_config(write_config(tmp_path, document))
        manifest = run_experiment(config, tmp_path / "sweep")
        assert len(manifest["runs"]) == 10
        assert [r["seed"] for r in manifest["runs"]] == list(range(10))
        for entry in manifest["runs"]:
            assert (tmp_path / "sweep" / entry["run"] / "manifest.json").exists()

    def test_output_root_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MONEYGAS_OUT_ROOT", str(tmp_path / "root"))
        config = load_config(write_config(tmp_path, simulate_config(write_samples=False)))
        run_experiment(config, "nested/out")
        assert (tmp_path / "root" / "nested" / "out" / "report.json").exists()


class TestCompareReport:
    REPORT = {"aggregate": {"t_hat": 10.0, "list": [1.0, 2.5]}}

    def test_matching(self):
        assert compare_report(self.REPORT, [
            {"name": "aggregate.t_hat", "value": 10.1, "tolerance": 0.03},
            {"name": "aggregate.list.1", "value": 2.5, "tolerance": 1e-12},
        ]) == []

    def test_five_percent_off_with_three_percent_tolerance(self):
        failures = compare_report(self.REPORT, [
            {"name": "aggregate.t_hat", "value": 10.5, "tolerance": 0.03}])
        assert len(failures) == 1 and "aggregate.t_hat" in failures[0]

    def test_absolute_tolerance(self):
        assert compare_report(self.REPORT, [
            {"name": "aggregate.t_hat", "value": 10.2, "tolerance": 0.25, "absolute": True}]) == []

    def test_unknown_field(self):
        with pytest.raises(ConfigError):
            compare_report(self.REPORT, [{"name": "aggregate.missing", "value": 1.0, "tolerance": 0.1}])

    def test_malformed_expectation(self):
        with pytest.raises(ConfigError):
            compare_report(self.REPORT, [{"name": "aggregate.t_hat", "value": 1.0}])


class TestCli:
    def test_simulate_then_check(self, tmp_path, capsys):
        config_path = write_config(tmp_path, simulate_config(write_samples=False))
        out = tmp_path / "run"
        assert main(["simulate", "-c", str(config_path), "-o", str(out)]) == 0
        expect = tmp_path / "expect.json"
        expect.write_text(json.dumps({"expectations": [
            {"name": "aggregate.t_hat", "value": 10.0, "tolerance": 0.03}]}))
        assert main(["check", "-r", str(out / "report.json"), "-e", str(expect)]) == 0
        expect.write_text(json.dumps({"expectations": [
            {"name": "aggregate.t_hat", "value": 12.0, "tolerance": 0.03}]}))
        assert main(["check", "-r", str(out / "report.json"), "-e", str(expect)]) == 1

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps({"task": "simulate"}))
        assert main(["simulate", "-c", str(path)]) == 2

    def test_task_command_mismatch(self, tmp_path):
        config_path = write_config(tmp_path, simulate_config())
        assert main(["analytic", "-c", str(config_path), "-o", str(tmp_path / "x")]) == 2

    def test_check_unknown_field_is_config_error(self, tmp_path):
        config_path = write_config(tmp_path, simulate_config(write_samples=False))
        out = tmp_path / "run2"
        assert main(["simulate", "-c", str(config_path), "-o", str(out)]) == 0
        expect = tmp_path / "expect.json"
        expect.write_text(json.dumps({"expectations": [
            {"name": "nope.nothing", "value": 1.0, "tolerance": 0.1}]}))
        assert main(["check", "-r", str(out / "report.json"), "-e", str(expect)]) == 2

    def test_analytic_pipeline(self, tmp_path):
        document = {"task": "analytic",
                    "model": {"kind": "combined", "n_agents": 10, "overdraft": 2.0},
                    "temperatures": [0.5, 1.0, 2.0]}
        config_path = write_config(tmp_path, document)
        out = tmp_path / "ana"
        assert main(["analytic", "-c", str(config_path), "-o", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["max_residual"] < 1e-6

    def test_transform_pipeline(self, tmp_path):
        document = {"task": "transform",
                    "model": {"kind": "credit_market", "n_agents": 1, "volume_x": 1.0},
                    "cycle": {"t_hot": 4.0, "t_cold": 2.0, "v1": 1.0, "v2": 2.718281828459045},
                    "free_expansion_factor": 1.5}
        config_path = write_config(tmp_path, document)
        out = tmp_path / "tra"
        assert main(["transform", "-c", str(config_path), "-o", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["cycle"]["eta"] == pytest.approx(0.5, abs=1e-9)
        assert report["policy_bound"]["eta_below_carnot"]
        assert (out / "path.tsv").exists()

    def test_pareto_pipeline(self, tmp_path):
        document = {"task": "pareto", "seed": 3,
                    "pareto": {"n_agents": 200, "floor_j": 1.0, "t_max": 3.0},
                    "temperature": 1.0, "direct_samples": 20_000,
                    "scan": {"temperatures": [0.5, 1.0, 1.5, 2.0, 2.5]}}
        config_path = write_config(tmp_path, document)
        out = tmp_path / "par"
        assert main(["pareto", "-c", str(config_path), "-o", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["analytic"]["tail_index"] == pytest.approx(2.0)
        assert report["direct"]["hill"] == pytest.approx(2.0, rel=0.1)
        assert report["scan"]["strictly_increasing"]
        assert (out / "scan.tsv").exists()
