import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nldiff import estimates as est
from nldiff.elliptic import EllipticSolveConfig
from nldiff.evolution import (EvolutionError, TimeGrid, Trajectory, evolve, initial_datum, linear_semigroup,
                              ode_solution, rescale_trajectory)
from nldiff.grid import Field, Grid
from nldiff.operators import FractionalLaplacian, Identity, Laplacian, Shifted, convolution_operator

G1 = Grid(1, 128, 32.0)
seeds = st.integers(0, 2**32 - 1)
ms = st.sampled_from([1.5, 2.0, 3.0])
specs = st.sampled_from([FractionalLaplacian(0.5), convolution_operator(G1, "gaussian", 1.0)])


def short_run(spec, seed, m, dt=0.02, T=0.4, u0=None):
    u0 = u0 if u0 is not None else initial_datum(G1, "noise", seed=seed % 1000)
    return evolve(spec, u0, m, TimeGrid.uniform(T, dt), snapshots="all")


def test_uniform_grid_ends_at_T():
    tg = TimeGrid.uniform(1.0, 0.3)
    assert tg.T == pytest.approx(1.0, abs=1e-15)
    assert len(tg.steps) == 4


def test_geometric_grid():
    tg = TimeGrid.geometric(10.0, 1e-3, 1.1, dt_max=0.5)
    assert tg.T == pytest.approx(10.0, rel=1e-12)
    assert max(tg.steps) <= 0.5 + 1e-3 * 0.5
    assert tg.steps[1] == pytest.approx(1.1e-3)


@pytest.mark.parametrize("bad", [lambda: TimeGrid(()), lambda: TimeGrid((0.1, -0.1)),
                                 lambda: TimeGrid.uniform(1.0, 0.0), lambda: TimeGrid.geometric(1.0, 1e-3, 0.9)])
def test_time_grid_validation(bad):
    with pytest.raises(ValueError):
        bad()


def test_zero_data_stays_zero():
    tr = evolve(FractionalLaplacian(1.0), Field.zeros(G1), 2.0, TimeGrid.uniform(1.0, 0.1))
    assert all(np.all(u.values == 0) for u in tr.fields)


def test_ode_richardson():
    g = Grid(1, 8, 1.0)
    u0 = Field.constant(g, 2.0)
    coarse = evolve(Identity(), u0, 2.0, TimeGrid.uniform(1.0, 1e-3)).fields[-1].values[0]
    fine = evolve(Identity(), u0, 2.0, TimeGrid.uniform(1.0, 5e-4)).fields[-1].values[0]
    exact = ode_solution(2.0, 1.0, 2.0)
    assert exact == pytest.approx(1 / (0.5 + 1))
    assert abs(2 * fine - coarse - exact) <= 1e-6 * exact


def test_linear_first_order():
    g = Grid(1, 256, 32.0)
    spec = FractionalLaplacian(1.0)
    u0 = initial_datum(g, "gaussian", width=1.0)
    exact = linear_semigroup(spec, u0, 1.0)
    errs = [np.abs(evolve(spec, u0, 1.0, TimeGrid.uniform(1.0, dt)).fields[-1].values - exact.values).max()
            for dt in (0.1, 0.05, 0.025, 0.0125)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 1) <= 0.1)


def test_geometric_snapshots_per_decade():
    tr = evolve(FractionalLaplacian(1.0), initial_datum(G1, "gaussian"), 2.0,
                TimeGrid.geometric(10.0, 1e-3, 1.05, dt_max=0.1), snapshots="geometric", per_decade=16)
    decade = (tr.times > 0.1) & (tr.times <= 1.0)
    assert 14 <= decade.sum() <= 18
    assert tr.times[-1] == pytest.approx(10.0)


def test_rescale_identity():
    tr = short_run(FractionalLaplacian(0.5), 0, 2.0)
    same = rescale_trajectory(tr, 1.0)
    assert np.array_equal(same.times, tr.times)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(same.fields, tr.fields))


@pytest.mark.parametrize("Lam", [2.0, 4.0])
def test_rescaled_ode_formula(Lam):
    t = np.linspace(0.1, 3.0, 30)
    y0, m = 2.0, 2.0
    a = Lam ** (1 / (m - 1))
    assert np.allclose(a * ode_solution(y0, Lam * t, m), ode_solution(a * y0, t, m), rtol=1e-14)


def test_rescale_consistency_fractional():
    g = Grid(1, 256, 32.0)
    spec, m, dt, Lam = FractionalLaplacian(1.0), 2.0, 0.01, 2
    u0 = initial_datum(g, "gaussian")
    direct = evolve(spec, u0 * Lam, m, TimeGrid.uniform(1.0, dt), snapshots="all")
    resc = rescale_trajectory(evolve(spec, u0, m, TimeGrid.uniform(Lam * 1.0, dt), snapshots="all"), Lam)
    diff = max(np.abs(direct.fields[k].values - resc.fields[Lam * k].values).max()
               for k in range(len(direct.fields)))
    assert diff / direct.u0.sup() <= 5 * dt + 5 * g.h


def test_rescale_needs_nonlinearity():
    tr = evolve(FractionalLaplacian(1.0), initial_datum(G1, "gaussian"), 1.0, TimeGrid.uniform(0.1, 0.05))
    with pytest.raises(ValueError):
        rescale_trajectory(tr, 2.0)


@given(specs, seeds, ms)
def test_lp_decay_along_trajectory(spec, seed, m):
    assert est.check_lp_decay(short_run(spec, seed, m)).passed


@given(specs, seeds, ms)
def test_ordered_data_stay_ordered(spec, seed, m):
    a = initial_datum(G1, "noise", seed=seed % 1000)
    b = a + initial_datum(G1, "noise", seed=seed % 1000 + 1)
    assert est.check_comparison(short_run(spec, seed, m, u0=a), short_run(spec, seed, m, u0=b)).passed


@given(specs, seeds, ms)
def test_mass_conserved(spec, seed, m):
    assert est.check_mass(short_run(spec, seed, m)).passed


@given(seeds, ms)
def test_discrete_mass_balance_with_absorption(seed, m):
    spec = Shifted(1.0, FractionalLaplacian(0.5))
    tr = short_run(spec, seed, m)
    assert est.check_mass(tr).passed
    assert np.all(np.diff([u.integral() for u in tr.fields]) < 0)


@given(specs, seeds, ms)
def test_time_monotonicity(spec, seed, m):
    assert est.check_time_monotonicity(short_run(spec, seed, m)).passed


def test_trajectory_save_load(tmp_path):
    tr = short_run(FractionalLaplacian(0.5), 3, 2.0)
    for fmt in ("bin", "csv"):
        d = tr.save(tmp_path / fmt, fmt=fmt)
        assert (d / "diagnostics.csv").read_text().splitlines()[0] == \
            "step,t,residual,newton_iters,mass,l1,l2,linf,boundary_contamination"
        back = Trajectory.load(d)
        assert np.array_equal(back.times, tr.times)
        assert np.allclose(back.fields[-1].values, tr.fields[-1].values, rtol=1e-15, atol=0)


def test_solver_failure_keeps_partial_trajectory():
    cfg = EllipticSolveConfig(max_newton=1)
    with pytest.raises(EvolutionError) as info:
        evolve(Laplacian(), initial_datum(G1, "gaussian", width=0.5), 2.0, TimeGrid.uniform(1.0, 0.1), cfg)
    assert info.value.step == 1
    assert info.value.partial is not None
    assert info.value.partial.times[-1] == 0.0


@pytest.mark.parametrize("kind", ["delta", "noise", "noise-full", "gaussian", "constant"])
def test_initial_data(kind):
    u = initial_datum(G1, kind, mass=2.0)
    assert u.values.min() >= 0
    if kind in ("delta", "gaussian"):
        assert u.integral() == pytest.approx(2.0)


def test_initial_data_from_file(tmp_path):
    from nldiff.grid import write_field_bin

    u = initial_datum(G1, "gaussian")
    write_field_bin(u, tmp_path / "u.bin")
    assert np.array_equal(initial_datum(G1, f"file:{tmp_path / 'u.bin'}").values, u.values)
    with pytest.raises(ValueError):
        initial_datum(G1, "sawtooth")


def test_ode_solution_linear_case():
    assert ode_solution(3.0, 2.0, 1.0) == pytest.approx(3 * math.exp(-2))
