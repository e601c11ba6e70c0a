import json

import pytest

from nldiff import config as cfgmod
from nldiff import estimates as est
from nldiff.experiment import (EXIT_CHECK_FAILED, EXIT_PASS, EXIT_SOLVER, EXIT_USAGE, run_experiment,
                               run_sweep)


def small(name="ode-absolute-bound", **changes):
    return cfgmod.preset(name).replace(**changes)


def test_ode_preset(tmp_path):
    res = run_experiment(small(), tmp_path / "run")
    assert res.status == EXIT_PASS
    rows = json.loads((tmp_path / "run" / "summary.json").read_text())["checks"]
    assert [r["name"] for r in rows] == ["smoothing:absolute", "fundamental"]
    assert all(r["passed"] for r in rows)
    assert set(rows[0]) >= {"name", "passed", "margin", "slack", "reference"}
    assert rows[0]["reference"] == est.REFERENCES["absolute"]
    for f in ("meta.json", "trajectory/meta.json", "trajectory/diagnostics.csv", "checks/00_smoothing_absolute.csv"):
        assert (tmp_path / "run" / f).exists()
    assert not (tmp_path / "run" / "FAILED").exists()


def test_fractional_preset_decay_fit(tmp_path):
    res = run_experiment(small("fractional-smoothing-1d"), tmp_path / "run")
    assert res.status == EXIT_PASS
    fit = json.loads((tmp_path / "run" / "checks" / "00_decay-fit.json").read_text())
    assert fit["worst_point"]["slope"] == pytest.approx(-0.5, rel=0.1)
    assert list((tmp_path / "run" / "kernels").glob("*.json"))


def test_zero_order_preset(tmp_path):
    assert run_experiment(small("zero-order-contrast"), tmp_path / "run").status == EXIT_PASS


def test_empty_checks(tmp_path):
    res = run_experiment(small(checks=()), tmp_path / "run")
    assert res.status == EXIT_PASS
    assert json.loads((tmp_path / "run" / "summary.json").read_text()) == {"checks": []}


def test_failed_check_sets_marker(tmp_path):
    cfg = small(checks=(cfgmod.CheckConfig("decay-fit", {"window": [1.0, 5.0], "expected": -3.0}),))
    res = run_experiment(cfg, tmp_path / "run")
    assert res.status == EXIT_CHECK_FAILED
    assert (tmp_path / "run" / "FAILED").exists()


def test_solver_failure_keeps_partial_output(tmp_path):
    cfg = cfgmod.loads('[operator]\nkind = "laplacian"\n[grid]\nn = 256\nL = 16.0\n'
                       '[solver]\nmax_newton = 1\n[schedule]\nT = 1.0\ndt = 0.1\n[initial]\nkind = "gaussian"\n')
    res = run_experiment(cfg, tmp_path / "run")
    assert res.status == EXIT_SOLVER
    assert "step 1" in (tmp_path / "run" / "FAILED").read_text()
    assert (tmp_path / "run" / "trajectory" / "meta.json").exists()


def test_bad_operator_is_a_usage_error(tmp_path):
    cfg = small(operator={"kind": "fractional_laplacian", "alpha": 3.0})
    assert run_experiment(cfg, tmp_path / "run").status == EXIT_USAGE


def test_outputs_are_bit_identical(tmp_path):
    cfg = small("zero-order-contrast")
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_sweep_runs_concurrently(tmp_path):
    cfgs = [small(m=m) for m in (2.0, 3.0)]
    results = run_sweep(cfgs, [tmp_path / "a", tmp_path / "b"], jobs=2)
    assert [r.status for r in results] == [EXIT_PASS, EXIT_PASS]
    with pytest.raises(cfgmod.ConfigError):
        run_sweep(cfgs, [tmp_path / "a", tmp_path / "a"])
