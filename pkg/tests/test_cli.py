import json
import subprocess
import sys

import pytest

from nldiff.cli import main


def run(*args):
    return main([str(a) for a in args])


def test_op_info(capsys):
    assert run("op-info", "--operator", "kind=geometric_stable,alpha=1") == 0
    assert json.loads(capsys.readouterr().out)["conserves_mass"] is True


def test_green_report_schema(tmp_path):
    out = tmp_path / "g.json"
    assert run("green", "--operator", "kind=bessel_resolvent,alpha=1", "--grid", "n=32,L=16,dim=3",
               "--out", out, "--field", tmp_path / "g.csv") == 0
    rep = json.loads(out.read_text())
    assert {"fitted", "classification", "window", "flags"} <= set(rep)
    assert (tmp_path / "g.csv").exists()


def test_heat_kernel_and_resolvent(tmp_path):
    assert run("heat-kernel", "--operator", "kind=fractional_laplacian,alpha=1", "--grid", "n=64,L=16",
               "--t", 0.5, "--field", tmp_path / "h.csv", "--out", tmp_path / "h.json") == 0
    assert run("resolvent", "--operator", "kind=fractional_laplacian,alpha=1", "--grid", "n=64,L=16",
               "--lambda", 0.01, "--m", 2, "--in", tmp_path / "h.csv", "--out", tmp_path / "u.csv",
               "--report", tmp_path / "r.json") == 0
    assert json.loads((tmp_path / "r.json").read_text())["residual"] <= 1e-9


def test_operator_from_file(tmp_path, capsys):
    (tmp_path / "op.toml").write_text('[operator]\nkind = "fractional_laplacian"\nalpha = 0.5\n')
    assert run("op-info", "--operator", tmp_path / "op.toml") == 0
    assert json.loads(capsys.readouterr().out)["alpha_effective"] == 0.5


def test_simulate_and_verify(tmp_path):
    assert run("simulate", "--preset", "ode-absolute-bound", "--out", tmp_path / "run") == 0
    assert run("verify", "--traj", tmp_path / "run" / "trajectory", "--check", "smoothing:absolute",
               "--param", "C1=1", "--out", tmp_path / "e.json", "--table", tmp_path / "e.csv") == 0
    assert json.loads((tmp_path / "e.json").read_text())["passed"]


def test_verify_with_kernel_report(tmp_path):
    assert run("simulate", "--operator", "kind=fractional_laplacian,alpha=1", "--grid", "n=512,L=64",
               "--u0", "gaussian", "--T", 2, "--dt", 0.02, "--out", tmp_path / "run") == 0
    assert run("green", "--operator", "kind=fractional_laplacian,alpha=1", "--grid", "n=512,L=64",
               "--alpha", 1, "--out", tmp_path / "k.json") == 0
    assert run("verify", "--traj", tmp_path / "run" / "trajectory", "--kernel", tmp_path / "k.json",
               "--check", "fundamental", "--out", tmp_path / "e.json") == 0
    assert run("verify", "--traj", tmp_path / "run" / "trajectory", "--check", "decay-fit",
               "--param", "window=[1.0, 2.0]", "--param", "expected=-5.0") == 1


def test_simulate_overrides_and_dump(capsys):
    assert run("simulate", "--preset", "ode-absolute-bound", "--set", "grid.n=16", "--dump-config") == 0
    assert "n = 16" in capsys.readouterr().out


def test_simulate_sweep(tmp_path):
    assert run("simulate", "--preset", "ode-absolute-bound", "--preset", "ode-absolute-bound",
               "--set", "schedule.T=1.0", "--jobs", 2, "--out", tmp_path / "sweep") == 0
    assert (tmp_path / "sweep" / "00" / "summary.json").exists()
    assert (tmp_path / "sweep" / "01" / "summary.json").exists()


@pytest.mark.parametrize("args", [
    ["simulate", "--preset", "ode-absolute-bound", "--set", "grid.bogus=1", "--dump-config"],
    ["op-info", "--operator", "kind=nope"],
    ["green", "--operator", "kind=laplacian", "--grid", "n=12,L=1"],
    ["suite", "--only", "nonsense"],
    ["simulate"],
])
def test_usage_errors(args, capsys):
    assert run(*args) == 2
    assert "error" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path):
    assert run("simulate", "--operator", "kind=laplacian", "--grid", "n=256,L=16", "--u0", "gaussian",
               "--T", 1, "--dt", 0.1, "--set", "solver.max_newton=1", "--out", tmp_path / "run") == 3


def test_inequality(tmp_path):
    assert run("inequality", "--operator", "kind=fractional_laplacian,alpha=1", "--check", "sv",
               "--family", "random", "--samples", 10, "--out", tmp_path / "q.csv",
               "--report", tmp_path / "q.json") == 0
    assert len((tmp_path / "q.csv").read_text().splitlines()) == 11
    assert run("inequality", "--operator", "kind=geometric_stable,alpha=1", "--grid", "n=256,L=16,dim=2",
               "--check", "nash", "--alpha", 1, "--trend-factor", 1.05, "--report", tmp_path / "n.json") == 1


def test_suite_only_green(capsys):
    assert run("suite", "--only", "green", "--quick") == 0
    out = capsys.readouterr().out
    assert "Green functions" in out and "classification matrix" in out
    assert "spectral substrate" not in out


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nldiff.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "nldiff" in proc.stdout
