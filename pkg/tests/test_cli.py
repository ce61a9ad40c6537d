import json

import pytest

from main import main

SMALL_EXPERIMENT = {
    "name": "small",
    "family": {"kind": "gaussian", "sigma": {"kind": "identity", "d": 3}},
    "statistic": "cov-deviation",
    "bound": "thm1",
    "n": 200,
    "t": 3.0,
    "trials": 20,
    "master_seed": 8,
}


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out) if out.strip() else None


class TestBound:
    def test_thm1(self, capsys):
        code, data = run_json(capsys, "bound", "thm1", "--kappa", "1", "--sigma", "identity:4", "--n", "100",
                              "--t", "4")
        assert code == 0
        assert data["value"] == pytest.approx(8.9443, abs=1e-4)
        assert data["valid"] is True

    def test_ellipsoid(self, capsys):
        code, data = run_json(capsys, "bound", "ellipsoid", "--sigma", "diag:4,0,0")
        assert code == 0
        assert data["value"] == pytest.approx(2.0)

    def test_prop1_from_dimension(self, capsys):
        code, data = run_json(capsys, "bound", "prop1", "--kappa", "1", "--d", "5", "--n", "100", "--t", "4")
        assert code == 0
        assert data["value"] == pytest.approx(15.6)

    def test_unknown_key(self, capsys):
        code, _ = run(capsys, "bound", "thm9", "--sigma", "identity:2")
        assert code == 3

    def test_missing_sigma(self, capsys):
        code, _ = run(capsys, "bound", "thm1", "--kappa", "1", "--n", "100", "--t", "4")
        assert code == 3

    def test_moment_order_flag(self, capsys):
        code, data = run_json(capsys, "bound", "thm2", "--C", "2", "--s", "2", "--sigma", "identity:4", "--n", "100")
        assert code == 0
        assert data["value"] == pytest.approx(0.4)
        assert data["constants_used"]["s"] == 2

    def test_missing_kappa(self, capsys):
        code, out = run(capsys, "bound", "thm1", "--sigma", "identity:4", "--n", "100", "--t", "4")
        assert code == 3
        assert out == ""


class TestEstimate:
    def test_forced_level(self, capsys, write_csv):
        path = write_csv("0.5,0\n")
        code, data = run_json(capsys, "estimate", path, "--v", "e1", "--s", "2", "--lambda", "1")
        assert code == 0
        assert data["estimate"] == pytest.approx(0.25)
        assert data["lambda_source"] == "forced"
        assert data["sigma_source"] is None

    def test_level_from_formula(self, capsys, write_csv):
        path = write_csv("1,0\n0,1\n-1,0\n0,-1\n")
        code, data = run_json(capsys, "estimate", path, "--v", "0.6,0.8", "--s", "2", "--eta", "1", "--t", "2")
        assert code == 0
        assert data["lambda_source"] == "formula"
        assert data["sigma_source"] == "sample-covariance"
        assert data["n"] == 4
        assert data["lambda"] > 0

    def test_bad_cell(self, capsys, write_csv):
        code, _ = run(capsys, "estimate", write_csv("1,2\n3,oops\n"), "--v", "e1", "--s", "2", "--lambda", "1")
        assert code == 3

    def test_needs_level_or_eta(self, capsys, write_csv):
        code, _ = run(capsys, "estimate", write_csv("1,2\n"), "--v", "e1", "--s", "2")
        assert code == 3

    def test_missing_file(self, capsys, tmp_path):
        code, _ = run(capsys, "estimate", str(tmp_path / "none.csv"), "--v", "e1", "--s", "2", "--lambda", "1")
        assert code == 3


class TestDuality:
    def test_gaps(self, capsys):
        code, data = run_json(capsys, "duality", "--size", "10", "--reps", "100", "--seed", "4")
        assert code == 0
        assert data["max_gibbs_gap"] <= 1e-10
        assert data["min_random_gap"] >= -1e-12

    def test_single_point_space(self, capsys):
        code, data = run_json(capsys, "duality", "--size", "1", "--reps", "5")
        assert code == 0
        assert data["size"] == 1

    def test_zero_reps(self, capsys):
        code, _ = run(capsys, "duality", "--size", "3", "--reps", "0")
        assert code == 3


class TestTensornorm:
    def test_sup_with_oracle(self, capsys, write_csv, rng):
        rows = "\n".join(",".join(f"{x:.6f}" for x in row) for row in rng.standard_normal((15, 2)))
        code, data = run_json(capsys, "tensornorm", write_csv(rows), "--s", "3", "--oracle")
        assert code == 0
        assert data["centering"] == "zero"
        assert data["sup"]["value"] == pytest.approx(data["oracle"]["value"], rel=1e-3)

    def test_family_dimension_mismatch(self, capsys, write_csv):
        code, _ = run(capsys, "tensornorm", write_csv("1,2\n3,4\n"), "--s", "2", "--family", "gaussian",
                      "--sigma", "identity:3")
        assert code == 3


class TestVerify:
    def test_missing_config(self, capsys, tmp_path):
        code, _ = run(capsys, "verify", str(tmp_path / "nope.json"))
        assert code == 3

    def test_invalid_config(self, capsys, write_config):
        path = write_config(dict(SMALL_EXPERIMENT, statistic="cov-lower-deviation", bound="thm2"))
        code, _ = run(capsys, "verify", path)
        assert code == 3

    def test_small_run_with_assert(self, capsys, write_config, tmp_path):
        out_dir = tmp_path / "reports"
        code, data = run_json(capsys, "verify", write_config(SMALL_EXPERIMENT), "--assert", "--out", str(out_dir))
        assert code == 0
        assert data["passed"] is True
        assert data["name"] == "small"
        assert (out_dir / "small.json").exists()
        assert (out_dir / "small_trials.csv").exists()

    def test_global_flags_before_subcommand(self, capsys, write_config, tmp_path):
        code, data = run_json(capsys, "--out", str(tmp_path), "--seed", "99", "verify", write_config(SMALL_EXPERIMENT))
        assert code == 0
        report = json.loads((tmp_path / "small.json").read_text(encoding="utf-8"))
        assert report["config"]["master_seed"] == 99

    def test_strict_regime(self, capsys, write_config, tmp_path):
        path = write_config(dict(SMALL_EXPERIMENT, n=5, trials=3))
        code, data = run_json(capsys, "verify", path, "--strict-regime", "--out", str(tmp_path))
        assert code == 2
        assert data["valid"] is False
        code, _ = run(capsys, "verify", path, "--out", str(tmp_path))
        assert code == 0

    def test_stdout_is_reproducible(self, capsys, write_config, tmp_path):
        path = write_config(SMALL_EXPERIMENT)
        _, first = run(capsys, "verify", path, "--out", str(tmp_path / "a"), "--threads", "1")
        _, second = run(capsys, "verify", path, "--out", str(tmp_path / "b"), "--threads", "3")
        assert first == second


class TestSweep:
    def test_grid_flag(self, capsys, write_config, tmp_path):
        code, data = run_json(capsys, "sweep", write_config(SMALL_EXPERIMENT), "--grid-n", "100,400",
                              "--out", str(tmp_path))
        assert code == 0
        assert [row["n"] for row in data["points"]] == [100, 400]
        assert data["failed"] == 0
        assert data["rate_slope"] < 0
        assert (tmp_path / "small_sweep.csv").exists()

    def test_bad_grid(self, capsys, write_config, tmp_path):
        code, _ = run(capsys, "sweep", write_config(SMALL_EXPERIMENT), "--grid-n", "a,b", "--out", str(tmp_path))
        assert code == 3


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        assert run(capsys, "frobnicate")[0] == 3

    def test_missing_subcommand(self, capsys):
        assert run(capsys)[0] == 3

    def test_help(self, capsys):
        code, out = run(capsys, "--help")
        assert code == 0
        assert "verify" in out

    def test_unknown_flag_is_not_expanded(self, capsys):
        assert run(capsys, "--se", "3", "duality", "--size", "2", "--reps", "1")[0] == 3

    def test_short_flag_after_each_subcommand(self, capsys, write_csv):
        path = write_csv("1,0\n0,1\n-1,0\n0,-1\n")
        assert run(capsys, "estimate", path, "--v", "e1", "--s", "2", "--lambda", "1")[0] == 0
        assert run(capsys, "tensornorm", path, "--s", "2", "--restarts", "2")[0] == 0
        assert run(capsys, "bound", "thm2", "--C", "1", "--s", "3", "--sigma", "identity:2", "--n", "50")[0] == 0

    def test_bad_log_level(self, capsys):
        assert run(capsys, "--log-level", "LOUD", "duality", "--size", "2", "--reps", "1")[0] == 3
