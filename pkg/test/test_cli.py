import json
import os

import numpy as np
import pytest

from channels.families import build_grw
from cli.interface import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, ExperimentRunner
from conftest import CONFIG_DIR, TWO_PI
from diagnostics.transfer import transfer_distribution
from lattice.box import BoxLattice
from main import main
from storage.database import RunDatabase
from utils.config import AppSettings
from utils.helpers import read_csv


def config_path(name):
    return os.path.join(CONFIG_DIR, name)


@pytest.fixture
def runner():
    return ExperimentRunner(AppSettings(), use_history=False)


def run(runner, command, name, out_dir, **kwargs):
    return runner.run(command, config_path(name), str(out_dir), **kwargs)


def load_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def column(rows, name):
    return np.array([float(r[name]) for r in rows])


def test_verify_identity(runner, tmp_path):
    assert run(runner, "verify-channel", "verify_identity.json", tmp_path) == EXIT_PASS
    report = load_json(tmp_path / "report.json")
    assert report["class"] == "MomentumDiagonal"
    assert report["cptp"] == "pass"
    assert report["completeness_max_dev"] <= 1e-10
    rows = read_csv(str(tmp_path / "diffusion_report.csv"))
    assert rows and all(r["class"] == "MomentumDiagonal" for r in rows)


def test_verify_grw_is_diffusive(runner, tmp_path):
    assert run(runner, "verify-channel", "verify_grw.json", tmp_path) == EXIT_PASS
    report = load_json(tmp_path / "report.json")
    assert report["class"] == "Diffusive"
    assert report["covariance_max_dev"] <= 1e-10
    assert report["cp_extension_min_eig"] >= -1e-10


def test_verify_reflecting_boost(runner, tmp_path):
    assert run(runner, "verify-channel", "verify_reflecting_boost.json", tmp_path) == EXIT_PASS
    report = load_json(tmp_path / "report.json")
    assert report["class"] == "PureBoost"
    assert report["boost_branches"] == ["reflecting", "reflecting"]


def test_verify_corrupted_channel_fails(runner, tmp_path):
    assert run(runner, "verify-channel", "verify_corrupted.json", tmp_path) == EXIT_FAIL
    checks = {c["name"]: c for c in load_json(tmp_path / "report.json")["checks"]}
    assert not checks["completeness"]["passed"]
    assert np.isclose(checks["completeness"]["value"], 0.75)


def test_diffuse_momentum_diagonal_keeps_spread(runner, tmp_path):
    assert run(runner, "diffuse", "diffuse_momentum_diagonal.json", tmp_path) == EXIT_PASS
    rows = read_csv(str(tmp_path / "diffuse.csv"))
    assert len(rows) == 101
    spread = column(rows, "spread_p_0")
    assert np.max(np.abs(spread - spread[0])) <= 1e-10
    assert load_json(tmp_path / "diffuse_summary.json")["class"] == "MomentumDiagonal"


def test_diffuse_grw_grows_by_transfer_variance(runner, tmp_path):
    assert run(runner, "diffuse", "diffuse_grw.json", tmp_path) == EXIT_PASS
    rows = read_csv(str(tmp_path / "diffuse.csv"))
    assert len(rows) == 101
    spread = column(rows, "spread_p_0")
    lat = BoxLattice(dim=1, n_max=48, box_length=TWO_PI)
    variance = transfer_distribution(build_grw(lat, 1.0), (0,)).variance(0)
    assert np.all(np.diff(spread) > 0)
    assert np.allclose(np.diff(spread), variance, rtol=0, atol=1e-10)
    summary = load_json(tmp_path / "diffuse_summary.json")
    assert summary["class"] == "Diffusive"
    assert summary["spread_monotone"] is True
    assert np.isclose(summary["transfer_variance"][0], variance, rtol=0, atol=1e-15)
    checks = {c["name"]: c for c in summary["checks"]}
    assert checks["step_matches_transfer_variance"]["passed"]


def test_diffuse_grw_in_small_window_fails(runner, tmp_path):
    config = tmp_path / "small.json"
    config.write_text(json.dumps({"lattice": {"dim": 1, "n_max": 16, "box_length": TWO_PI},
                                  "channel": {"kind": "grw", "r_c": 1.0, "strength": 1.0},
                                  "state": {"plane_wave": [0]}, "run": {"n_steps": 100}}))
    assert runner.run("diffuse", str(config), str(tmp_path / "out")) == EXIT_FAIL
    checks = {c["name"]: c for c in load_json(tmp_path / "out" / "diffuse_summary.json")["checks"]}
    assert not checks["step_matches_transfer_variance"]["passed"]
    assert checks["step_matches_transfer_variance"]["value"] > 1e-3
    assert checks["spread_monotone"]["passed"]


def test_diffuse_reflecting_boost_alternates_mean(runner, tmp_path):
    assert run(runner, "diffuse", "diffuse_reflecting_boost.json", tmp_path) == EXIT_PASS
    rows = read_csv(str(tmp_path / "diffuse.csv"))
    spread = column(rows, "spread_p_0")
    mean = column(rows, "mean_p_0")
    assert np.max(np.abs(spread - spread[0])) <= 1e-10
    assert np.isclose(mean[0], 0.64 * 2 + 0.36 * 5)
    assert np.all(np.sign(mean[1:]) == -np.sign(mean[:-1]))
    assert np.allclose(column(rows, "delta_0"), 0.0, atol=1e-12)


def test_theorem_scan_has_no_misclassification(runner, tmp_path):
    assert run(runner, "theorem-scan", "theorem_scan.json", tmp_path) == EXIT_PASS
    summary = load_json(tmp_path / "theorem_scan.json")
    assert summary["misclassifications"] == 0
    assert summary["family_mismatches"] == 0
    assert summary["confusion"]["MomentumDiagonal"] == {"zero": 50, "nonzero": 0}
    assert summary["confusion"]["Diffusive"] == {"zero": 0, "nonzero": 50}


def test_theorem_scan_empty_and_loose_tolerance(runner, tmp_path):
    assert run(runner, "theorem-scan", "theorem_scan_empty.json", tmp_path) == EXIT_PASS
    summary = load_json(tmp_path / "theorem_scan.json")
    assert summary["confusion"] == {}
    assert summary["warning_count"] == 0

    assert run(runner, "theorem-scan", "theorem_scan_empty.json", tmp_path, tol=0.1) == EXIT_PASS
    assert load_json(tmp_path / "theorem_scan.json")["warning_count"] == 1


def test_theorem_scan_with_absurd_tolerance_warns(runner, tmp_path):
    code = run(runner, "theorem-scan", "theorem_scan.json", tmp_path, tol=0.5)
    summary = load_json(tmp_path / "theorem_scan.json")
    assert summary["tolerance"] == 0.5
    assert summary["warning_count"] >= 1
    assert "degenerate" in summary["warnings"][0]
    # every misclassified channel adds one warning after the tolerance warning
    assert summary["warning_count"] == 1 + summary["misclassifications"]
    assert sum(sum(row.values()) for row in summary["confusion"].values()) == 100
    assert code == (EXIT_PASS if summary["misclassifications"] == 0 else EXIT_FAIL)


def test_lindblad_csl_slope(runner, tmp_path):
    assert run(runner, "lindblad-evolve", "lindblad_csl.json", tmp_path) == EXIT_PASS
    summary = load_json(tmp_path / "lindblad_summary.json")
    assert not summary["is_momentum_diagonal"]
    assert abs(summary["dp_rate"][0]) <= 1e-12
    assert summary["dp2_rate"][0] > 0
    rows = read_csv(str(tmp_path / "trajectory.csv"))
    assert list(rows[0]) == ["t", "trace", "min_eig", "mean_p_0", "spread_p_0"]
    assert len(rows) == 101


@pytest.mark.parametrize("name", ["lindblad_zero.json", "lindblad_momentum_diagonal.json"])
def test_lindblad_without_diffusion_keeps_spread(runner, tmp_path, name):
    assert run(runner, "lindblad-evolve", name, tmp_path) == EXIT_PASS
    summary = load_json(tmp_path / "lindblad_summary.json")
    assert summary["is_momentum_diagonal"]
    names = [c["name"] for c in summary["checks"]]
    assert "spread_constant" in names


def test_unravel_grw(runner, tmp_path):
    assert run(runner, "unravel", "unravel_grw.json", tmp_path) == EXIT_PASS
    report = load_json(tmp_path / "unravel_report.json")
    assert report["trace_distance"] <= 0.05
    assert report["equivalence"]["distance"] <= report["equivalence"]["bound"]
    rows = read_csv(str(tmp_path / "outcomes.csv"))
    assert len(rows) == 10_000
    assert list(rows[0]) == ["trajectory", "step", "k", "q_0"]
    assert load_json(tmp_path / "aggregate_state.json")["format"] == "density-matrix"


def test_runs_are_reproducible(runner, tmp_path):
    config = tmp_path / "random.json"
    config.write_text(json.dumps({"lattice": {"dim": 1, "n_max": 3, "box_length": TWO_PI},
                                  "channel": {"kind": "random", "n_kraus": 2, "max_transfer": 1},
                                  "state": {"plane_wave": [0]}, "run": {"n_steps": 3, "seed": 2}}))
    for out in ("a", "b"):
        assert runner.run("diffuse", str(config), str(tmp_path / out)) == EXIT_PASS
    first = (tmp_path / "a" / "diffuse.csv").read_bytes()
    assert first == (tmp_path / "b" / "diffuse.csv").read_bytes()

    assert runner.run("diffuse", str(config), str(tmp_path / "c"), seed=4) == EXIT_PASS
    assert first != (tmp_path / "c" / "diffuse.csv").read_bytes()


def test_usage_errors(runner, tmp_path):
    assert runner.run("verify-channel", str(tmp_path / "missing.json"), str(tmp_path)) == EXIT_USAGE
    assert run(runner, "explode", "verify_identity.json", tmp_path) == EXIT_USAGE
    # theorem-scan config has no channel block
    assert run(runner, "verify-channel", "theorem_scan.json", tmp_path) == EXIT_USAGE

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"lattice": {"dim": 1, "n_max": 2, "box_length": 1.0, "colour": 3},
                               "channel": {"kind": "identity"}}))
    assert runner.run("verify-channel", str(bad), str(tmp_path)) == EXIT_USAGE

    no_steps = tmp_path / "no_steps.json"
    no_steps.write_text(json.dumps({"lattice": {"dim": 1, "n_max": 2, "box_length": 1.0},
                                    "channel": {"kind": "identity"}, "state": {"plane_wave": [0]}}))
    assert runner.run("diffuse", str(no_steps), str(tmp_path)) == EXIT_USAGE

    out_of_range = tmp_path / "range.json"
    out_of_range.write_text(json.dumps({"lattice": {"dim": 1, "n_max": 2, "box_length": 1.0},
                                        "channel": {"kind": "identity"}, "state": {"plane_wave": [5]},
                                        "run": {"n_steps": 1}}))
    assert runner.run("diffuse", str(out_of_range), str(tmp_path)) == EXIT_USAGE


def test_history_records_runs(tmp_path):
    db_path = str(tmp_path / "history.db")
    runner = ExperimentRunner(AppSettings(), history_path=db_path)
    assert runner.last_config("verify-channel") is None
    assert run(runner, "verify-channel", "verify_identity.json", tmp_path / "out") == EXIT_PASS

    runs = RunDatabase(db_path).get_recent_runs()
    assert len(runs) == 1
    assert runs[0]["command"] == "verify-channel"
    assert runs[0]["exit_code"] == EXIT_PASS
    checks = RunDatabase(db_path).get_check_results(runs[0]["id"])
    assert {c["check_name"] for c in checks} >= {"completeness", "cptp", "covariance"}
    assert runner.last_config("verify-channel") == config_path("verify_identity.json")
    assert runner.last_config("diffuse") is None


def test_history_summary_keeps_check_outcomes(tmp_path):
    db_path = str(tmp_path / "history.db")
    runner = ExperimentRunner(AppSettings(), history_path=db_path)
    assert run(runner, "verify-channel", "verify_corrupted.json", tmp_path / "out") == EXIT_FAIL

    summary = json.loads(RunDatabase(db_path).get_recent_runs()[0]["summary"])
    assert summary["passed"] is False
    assert summary["checks"]["completeness"] == "fail"
    assert summary["checks"]["covariance"] == "pass"


def test_usage_errors_do_not_become_last_config(tmp_path):
    db_path = str(tmp_path / "history.db")
    runner = ExperimentRunner(AppSettings(), history_path=db_path)
    no_steps = tmp_path / "no_steps.json"
    no_steps.write_text(json.dumps({"lattice": {"dim": 1, "n_max": 2, "box_length": 1.0},
                                    "channel": {"kind": "identity"}, "state": {"plane_wave": [0]}}))
    assert runner.run("diffuse", str(no_steps), str(tmp_path)) == EXIT_USAGE
    assert runner.last_config("diffuse") is None
    assert RunDatabase(db_path).get_recent_runs()[0]["exit_code"] == EXIT_USAGE


def test_main_reuses_last_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    history = str(tmp_path / "history.db")
    first = ["verify-channel", "--config", config_path("verify_identity.json"),
             "--out", str(tmp_path / "first"), "--history", history]
    assert main(first) == EXIT_PASS
    assert main(["verify-channel", "--out", str(tmp_path / "again"), "--history", history]) == EXIT_PASS
    assert (tmp_path / "again" / "report.json").exists()
    assert main(["diffuse", "--history", history]) == EXIT_USAGE


def test_main_entry_point(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    argv = ["verify-channel", "--config", config_path("verify_identity.json"),
            "--out", str(tmp_path / "out"), "--no-history"]
    assert main(argv) == EXIT_PASS
    assert (tmp_path / "out" / "report.json").exists()
    assert main([]) == EXIT_USAGE
    assert main(["verify-channel"]) == EXIT_USAGE
