from __future__ import annotations

import json
import shutil
import subprocess

import numpy as np
import pytest
from click.testing import CliRunner

from trawlkit.cli import EXIT_CONFIG, EXIT_NUMERIC, main, parse_call, parse_seed, parse_trawl
from trawlkit.levy import Gamma

SLICE = ["simulate", "--method", "slice", "--trawl", "exponential(1)", "--seed-dist", "gaussian(0,1)", "--k", "1000", "--tau", "0.5", "--rng", "42"]


@pytest.fixture
def runner():
    return CliRunner()


def _run(runner, args, **kw):
    res = runner.invoke(main, args, catch_exceptions=False, **kw)
    return res


def test_parse_call():
    assert parse_call("gamma(2, 3)") == ("gamma", [2, 3], {})
    assert parse_call("Exponential(lambda=2)") == ("exponential", [], {"lam": 2})
    assert parse_seed("gamma(2,3)") == Gamma(2.0, 3.0)
    assert parse_trawl("triangle(-2)").support_bound == -2.0


def test_simulate_deterministic(runner, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run(runner, SLICE + ["--out", str(a)]).exit_code == 0
    assert _run(runner, SLICE + ["--out", str(b)]).exit_code == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "time,value" and len(lines) == 1001
    assert lines[1].startswith("0.5,")


def test_thread_count_does_not_change_output(runner, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    _run(runner, SLICE + ["--out", str(a)], env={"TRAWLKIT_THREADS": "1"})
    _run(runner, SLICE + ["--out", str(b)], env={"TRAWLKIT_THREADS": "4"})
    assert a.read_bytes() == b.read_bytes()


def test_manifest_roundtrip(runner, tmp_path):
    a = tmp_path / "a.csv"
    _run(runner, SLICE + ["--out", str(a)])
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["config"]["method"] == "slice" and man["config"]["rng"] == 42
    assert {"version", "wall_time", "errors"} <= set(man)
    b = tmp_path / "b.csv"
    assert _run(runner, ["simulate", "--config", str(tmp_path / "a.csv.manifest.json"), "--out", str(b)]).exit_code == 0
    assert a.read_bytes() == b.read_bytes()


def test_key_value_config(runner, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# grid run\nmethod = grid\ntrawl = \"triangle(-1)\"\nseed_dist = gamma(2,3)\nk = 50\ntau = 0.5\ndelta = 0.05\nrng = 7\n")
    res = _run(runner, ["simulate", "--config", str(cfg)])
    assert res.exit_code == 0
    vals = np.array([float(l.split(",")[1]) for l in res.output.splitlines()[1:]])
    assert len(vals) == 50 and np.all(vals > 0)


@pytest.mark.parametrize(
    "extra",
    [
        ["--method", "slice", "--trawl", "exponential(1)", "--seed-dist", "wobbly(1)", "--k", "5", "--tau", "0.5"],
        ["--method", "slice", "--trawl", "exponential(-1)", "--seed-dist", "gaussian(0,1)", "--k", "5", "--tau", "0.5"],
        ["--method", "slice", "--trawl", "exponential(1)", "--seed-dist", "gaussian(0,1)", "--tau", "0.5"],
    ],
    ids=["unknown-seed", "bad-trawl", "missing-k"],
)
def test_config_errors(runner, tmp_path, extra):
    out = tmp_path / "x.csv"
    res = runner.invoke(main, ["simulate", *extra, "--out", str(out)])
    assert res.exit_code == EXIT_CONFIG
    assert not out.exists() and not (tmp_path / "x.csv.manifest.json").exists()


def test_unknown_config_key(runner, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("method = slice\nflavour = mint\n")
    assert runner.invoke(main, ["simulate", "--config", str(cfg)]).exit_code == EXIT_CONFIG


def test_invalid_parameters_are_config_errors(runner):
    res = runner.invoke(
        main,
        ["simulate", "--method", "vm", "--trawl", "exponential(1)", "--seed-dist", "gaussian(0,1)", "--kernel", "constant(1)",
         "--vol-trawl", "long_memory(0.5, 0.5)", "--vol-seed", "gamma(2,3)", "--k", "5", "--tau", "0.5"],
    )
    assert res.exit_code == EXIT_CONFIG


def test_numeric_error_code(runner, tmp_path, monkeypatch):
    from trawlkit import cli
    from trawlkit.inversion import InversionError

    def boom(cfg, atoms):
        raise InversionError("transform inversion did not converge", 1.0)

    monkeypatch.setattr(cli, "_run_series", boom)
    out = tmp_path / "x.csv"
    res = runner.invoke(main, SLICE + ["--out", str(out)])
    assert res.exit_code == EXIT_NUMERIC != EXIT_CONFIG
    assert not out.exists()


def test_slice_truncation_report(runner, tmp_path):
    out = tmp_path / "t.csv"
    args = ["simulate", "--method", "slice", "--trawl", "exponential(1)", "--seed-dist", "gamma(2,3)", "--k", "50", "--tau", "0.5", "--n-trunc", "10", "--out", str(out)]
    assert _run(runner, args).exit_code == 0
    rep = json.loads((tmp_path / "t.csv.errors.json").read_text())
    assert set(rep) >= {"mean", "var"} and len(rep["mean"]) == 50
    man = json.loads((tmp_path / "t.csv.manifest.json").read_text())
    assert "max_abs_mean" in man["errors"]["truncation"]


def test_cpp_dump_atoms(runner, tmp_path):
    out, atoms = tmp_path / "c.csv", tmp_path / "atoms.csv"
    args = ["simulate", "--method", "cpp", "--trawl", "triangle(-1)", "--seed-dist", "poisson(2)", "--k", "20", "--tau", "0.5", "--out", str(out), "--dump-atoms", str(atoms)]
    assert _run(runner, args).exit_code == 0
    assert atoms.read_text().splitlines()[0].count(",") >= 2


def test_vm_writes_sigma2(runner):
    args = ["simulate", "--method", "vm", "--trawl", "exponential(0.25)", "--seed-dist", "gaussian(1,1)", "--kernel", "constant(1)",
            "--vol-trawl", "long_memory(0.5, 1.5)", "--vol-seed", "ig(2,1)", "--vol-step", "0.1", "--k", "20", "--tau", "0.5", "--rng", "3"]
    res = _run(runner, args)
    assert res.exit_code == 0
    lines = res.output.splitlines()
    assert lines[0] == "time,value,sigma2" and len(lines) == 21


def test_field_pipeline(runner, tmp_path):
    table = tmp_path / "t.bin"
    assert _run(runner, ["estimate-slices", "--trawl", "triangle(-1)", "--tau", "0.2", "--dx", "0.2", "--n", "1e5", "--out", str(table)]).exit_code == 0
    assert (tmp_path / "t.bin.csv").exists()
    out = tmp_path / "f.csv"
    res = _run(runner, ["simulate-field", "--table", str(table), "--kt", "30", "--ks", "20", "--seed-dist", "gamma(2,3)", "--rng", "1", "--out", str(out)])
    assert res.exit_code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# ks,kt,tau,dx" and lines[1].startswith("# 20,30,")
    F = np.loadtxt(str(out), delimiter=",", comments="#")
    assert F.shape == (20, 30)


def test_unbounded_field(runner, tmp_path):
    out = tmp_path / "u.csv"
    args = ["simulate-field", "--trawl", "exponential(1)", "--kt", "10", "--ks", "5", "--tau", "0.5", "--dx", "0.5", "--n", "1e4", "--seed-dist", "gaussian(0,1)", "--out", str(out)]
    assert _run(runner, args).exit_code == 0
    assert np.loadtxt(str(out), delimiter=",", comments="#").shape == (5, 10)


def test_unbounded_field_default_sample_count(runner, tmp_path):
    out = tmp_path / "u.csv"
    args = ["simulate-field", "--trawl", "exponential(1)", "--kt", "4", "--ks", "3", "--tau", "0.5", "--dx", "0.5", "--seed-dist", "gaussian(0,1)", "--out", str(out)]
    assert _run(runner, args).exit_code == 0


def test_grid_long_memory_default_horizon(runner, tmp_path):
    # the 1e-4 tail of (1 - t)^{-1.5} lies near -1e8; cells that far back are empty anyway
    out = tmp_path / "g.csv"
    args = ["simulate", "--method", "grid", "--trawl", "long_memory(0.5,1.5)", "--seed-dist", "gaussian(0,1)",
            "--k", "20", "--tau", "0.5", "--delta", "0.05", "--out", str(out)]
    assert _run(runner, args).exit_code == 0
    assert np.loadtxt(str(out), delimiter=",", skiprows=1).shape == (20, 2)


def test_oversized_grid_is_config_error(runner, tmp_path):
    out = tmp_path / "g.csv"
    args = ["simulate", "--method", "grid", "--trawl", "long_memory(0.5,1.5)", "--seed-dist", "gaussian(0,1)",
            "--k", "5", "--tau", "0.5", "--delta", "0.05", "--T", "-1e9", "--out", str(out)]
    res = runner.invoke(main, args)
    assert res.exit_code == EXIT_CONFIG and not out.exists()


def test_estimate_slices_refuses_unbounded(runner, tmp_path):
    res = runner.invoke(main, ["estimate-slices", "--trawl", "exponential(1)", "--tau", "0.5", "--dx", "0.5", "--out", str(tmp_path / "t.bin")])
    assert res.exit_code == EXIT_CONFIG


def test_experiment_acf(runner, tmp_path):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("runs = 5\nk = 200\ntau = 0.5\nmax_lag = 3\n")
    out = tmp_path / "acf.csv"
    assert _run(runner, ["experiment", "acf", "--config", str(cfg), "--out", str(out)]).exit_code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "lag,empirical,theoretical" and len(lines) == 5 and lines[-1].startswith("# config_hash,")


def test_console_script():
    exe = shutil.which("trawlkit")
    if exe is None:
        pytest.skip("console script not on PATH")
    res = subprocess.run([exe, "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "trawlkit" in res.stdout
