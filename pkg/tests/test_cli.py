import json

import numpy as np
import pytest
from scipy import stats

from confcurve import cli
from confcurve.mc import substream
from confcurve.models.gpd import sample_gpd


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_help_exits_zero(capsys):
    assert run("study", "--help") == 0
    assert "--check" in capsys.readouterr().out


def test_bad_flags_exit_two(capsys):
    assert run("curve", "--model", "nope") == 2
    assert run("curve", "--model", "normal-var") == 2
    assert "usage" in capsys.readouterr().err


def test_reflection_subcommand_prints_exact_rationals(capsys):
    assert run("lemma1", "1/2", "3", "-1/3") == 0
    assert capsys.readouterr().out.splitlines() == ["a2 = 1/2", "a3 = 1/4", "a4 = -37/12"]
    assert run("lemma1", "x/y") == 2


def test_curve_writes_table_and_manifest(tmp_path):
    out = tmp_path / "a"
    assert run("curve", "--model", "exp-rate", "--simulate", "--theta-true", 2, "--n", 8, "--seed", 3,
               "--replicates", 3000, "--out", out) == 0
    lines = (out / "curves.csv").read_text().splitlines()
    assert lines[0] == "theta,cc,ccstar,C,H,Hstar" and len(lines) == 202
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == "curve" and man["model"] == "exp-rate"
    assert man["parameters"]["seed"] == 3 and man["version"]


def test_curve_bytes_independent_of_workers_and_replayable(tmp_path):
    args = ["curve", "--model", "normal-var", "--simulate", "--theta-true", 4, "--n", 10, "--seed", 1,
            "--replicates", 5000]
    assert run(*args, "--out", tmp_path / "w1") == 0
    assert run(*args, "--workers", 4, "--out", tmp_path / "w4") == 0
    one = (tmp_path / "w1" / "curves.csv").read_bytes()
    assert one == (tmp_path / "w4" / "curves.csv").read_bytes()
    assert run("replay", tmp_path / "w1" / "manifest.json", "--out", tmp_path / "re") == 0
    assert (tmp_path / "re" / "curves.csv").read_bytes() == one


def test_config_file_defaults_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 5\nreplicates = 2000\nn = 6\n')
    out = tmp_path / "o"
    assert run("curve", "--config", cfg, "--model", "normal-var", "--simulate", "--seed", 7, "--out", out) == 0
    params = json.loads((out / "manifest.json").read_text())["parameters"]
    assert params["seed"] == 7 and params["replicates"] == 2000 and params["n"] == 6


def test_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("bogus = 1\n")
    assert run("curve", "--config", cfg, "--model", "normal-var", "--simulate") == 2


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "42")
    out = tmp_path / "e"
    assert run("curve", "--model", "normal-var", "--simulate", "--replicates", 1000, "--exact", "--out", out) == 0
    assert json.loads((out / "manifest.json").read_text())["parameters"]["seed"] == 42


def test_transform_curve_from_summary(tmp_path):
    out = tmp_path / "t"
    assert run("curve", "--model", "normal-transform", "--a", 0.3, "--z0", 0.3, "--phihat", 10,
               "--replicates", 4000, "--out", out) == 0
    assert json.loads((out / "manifest.json").read_text())["estimate"] == pytest.approx(10.0)


def test_custom_gamma_curve_uses_data_size(tmp_path):
    data = tmp_path / "obs.csv"
    data.write_text("x\n1.2\n0.7\n3.1\n2.2\n0.4\n")
    out = tmp_path / "out"
    assert run("curve", "--model", "expfam-custom", "--shape", 2, "--data", data, "--replicates", 2000, "--out", out) == 0
    table = np.genfromtxt(out / "curves.csv", delimiter=",", names=True)
    # mean of 5 gamma(2) draws: C(theta) = P(mean > 1.52 | theta)
    expected = stats.gamma.sf(1.52 * 10 / table["theta"], 10)
    assert np.allclose(table["C"], expected, atol=1e-9)


def test_numerical_failure_exits_one(tmp_path, capsys):
    data = tmp_path / "zeros.csv"
    data.write_text("0\n0\n0\n")
    assert run("curve", "--model", "normal-var", "--data", data, "--out", tmp_path / "z") == 1
    assert "numerical failure" in capsys.readouterr().err


def test_study_runs_and_reports(tmp_path):
    out = tmp_path / "s"
    assert run("study", "--model", "exp-rate", "--check", "theorem2", "--n", "10,40", "--datasets", 40,
               "--out", out) == 0
    assert (out / "theorem2.csv").read_text().startswith("n,median_gap,ratio_to_next\n")


def test_study_failure_exits_three(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(cli, "rate_table", lambda *a, **k: {"median_gap": {10: 1.0, 40: 0.9}, "ratio": {10: 0.9}})
    assert run("study", "--model", "exp-rate", "--check", "theorem2", "--n", "10,40", "--out", tmp_path) == 3
    assert "FAILED theorem2 n=10" in capsys.readouterr().err


def test_gpd_curve_from_file(tmp_path):
    data = tmp_path / "exc.csv"
    np.savetxt(data, sample_gpd(0.18, 0.075, substream(7, 20_000, 0), None, 195), fmt="%.12g")
    out = tmp_path / "g"
    assert run("curve", "--model", "gpd", "--data", data, "--lambda", 24.375, "--margin", 0.285,
               "--replicates", 300, "--points", 21, "--out", out) == 0
    for name in ("curves.csv", "corrected.csv", "median.csv", "manifest.json"):
        assert (out / name).exists()
    summary = json.loads((out / "manifest.json").read_text())["summary"]
    assert summary["nodes_ok"] >= 0.9 * summary["nodes"]
