import json

import pytest
import yaml
from click.testing import CliRunner

from spmlab.cli import main

from test_harness import base_raw


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "experiment.yaml"
    p.write_text(yaml.safe_dump(base_raw(n_paths=3)))
    return p


def run_cli(*args):
    return CliRunner().invoke(main, list(args))


class TestSimulate:
    def test_writes_trajectory(self, cfg_file, tmp_path):
        out = tmp_path / "sim"
        r = run_cli("simulate", "--config", str(cfg_file), "--out", str(out))
        assert r.exit_code == 0, r.output
        lines = (out / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "t,hm1_norm,lp_norm,min,max,supermartingale"
        assert len(lines) > 2

    def test_bad_config_exit_2(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("grid: {n_interior: 1}\n")
        r = run_cli("simulate", "--config", str(p))
        assert r.exit_code == 2


class TestEnsemble:
    def test_outputs(self, cfg_file, tmp_path):
        out = tmp_path / "ens"
        r = run_cli("ensemble", "--config", str(cfg_file), "--out", str(out), "--workers", "1")
        assert r.exit_code == 0, r.output
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["empirical_cdf"]) == len(summary["checkpoints"])
        tau_lines = (out / "tau.csv").read_text().splitlines()
        assert tau_lines[0] == "path_index,tau_hat"
        assert len(tau_lines) == 1 + summary["n_paths"]

    def test_seed_override_changes_nothing_but_rng(self, cfg_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        r1 = run_cli("ensemble", "--config", str(cfg_file), "--seed", "99", "--out", str(out1))
        r2 = run_cli("ensemble", "--config", str(cfg_file), "--seed", "99", "--out", str(out2))
        assert r1.exit_code == 0 and r2.exit_code == 0
        a = json.loads((out1 / "summary.json").read_text())
        b = json.loads((out2 / "summary.json").read_text())
        a.pop("timestamp"), b.pop("timestamp")
        assert a == b

    def test_strict_failure_exit_4(self, tmp_path):
        # gamma override so large the bound saturates at 1 before extinction
        raw = base_raw(n_paths=3, gamma=1e6, checkpoints=[0.01, 0.4])
        p = tmp_path / "strict.yaml"
        p.write_text(yaml.safe_dump(raw))
        r = run_cli("ensemble", "--config", str(p), "--strict", "--out", str(tmp_path / "o"))
        assert r.exit_code == 4


class TestBound:
    def test_curve(self, cfg_file, tmp_path):
        out = tmp_path / "bnd"
        r = run_cli("bound", "--config", str(cfg_file), "--out", str(out))
        assert r.exit_code == 0, r.output
        lines = (out / "bound.csv").read_text().splitlines()
        assert lines[0] == "t,bound"
        vals = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(0.0 <= v <= 1.0 for v in vals)
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestGamma:
    def test_json_output(self, cfg_file, tmp_path):
        out = tmp_path / "g"
        r = run_cli("gamma", "--config", str(cfg_file), "--out", str(out))
        assert r.exit_code == 0, r.output
        d = json.loads((out / "gamma.json").read_text())
        assert d["value"] > 0
        assert d["alpha"] == 0.5
        assert len(d["minimizer"]) == 31


class TestConvergence:
    def test_report(self, cfg_file, tmp_path):
        out = tmp_path / "conv"
        r = run_cli("convergence", "--config", str(cfg_file), "--out", str(out))
        assert r.exit_code == 0, r.output
        lines = (out / "convergence.csv").read_text().splitlines()
        assert lines[0] == "lambda_coarse,lambda_fine,sup_hm1_distance,l2l2_distance"
        assert len(lines) == 4  # three consecutive pairs from four lambdas


class TestMissingConfig:
    def test_nonexistent_file(self):
        r = run_cli("simulate", "--config", "/does/not/exist.yaml")
        assert r.exit_code != 0
