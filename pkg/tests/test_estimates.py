import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nldiff import estimates as est
from nldiff.elliptic import EllipticSolveConfig
from nldiff.evolution import TimeGrid, evolve, initial_datum, rescale_trajectory
from nldiff.grid import Field, Grid
from nldiff.kernels import classify_assumptions, green_function, green_resolvent
from nldiff.operators import FractionalLaplacian, Identity, Laplacian, convolution_operator


@pytest.fixture(scope="module")
def ode():
    g = Grid(1, 8, 1.0)
    return evolve(Identity(), Field.constant(g, 2.0), 2.0, TimeGrid.uniform(5.0, 1e-3))


@pytest.fixture(scope="module")
def fractional():
    g = Grid(1, 1024, 64.0)
    spec = FractionalLaplacian(1.0)
    traj = evolve(spec, initial_datum(g, "delta"), 2.0, TimeGrid.geometric(30.0, 1e-4, 1.05, dt_max=0.05))
    return traj, classify_assumptions(green_function(spec, g), alpha=1.0)


def test_constants_at_reference_point():
    m, a, N = 2.0, 1.0, 3
    assert est.c_fundamental(m) == 4.0
    assert est.theta(m, a, N) == 0.25
    K1, K2 = 0.7, 1.9
    expected = 2**0.5 * 4**0.75 * 2**0.25 * K1**0.5 * K2**0.25
    assert est.c_smoothing_g1(m, a, N, K1, K2) == pytest.approx(expected, rel=1e-14)


def test_other_constants():
    assert est.c_fundamental_resolvent(2.0) == 18.0
    assert est.c_tilde_absolute(2.0, 1.0) == 4.0
    assert est.theta(2.0, 1.0, 3, p=2.0) == pytest.approx(0.2)
    assert est.c_tilde_g1prime(2.0, 1.0) == pytest.approx((4 * 4) ** 0.5)
    assert est.g3_constants(2.0, 2.0, 1.0, 1.0)["early"] == 2.0


@given(st.floats(1.1, 4.0), st.floats(0.1, 2.0), st.integers(1, 3))
def test_theta_identity(m, alpha, N):
    th = est.theta(m, alpha, N)
    assert alpha * th + N * (m - 1) * th == pytest.approx(1.0)


def test_implication_exponents_gamma_zero():
    e = est.implication_exponents(0.0, 2.0, 1.0, 3.0)
    assert e["F"] == pytest.approx((3 - 1) / 3)
    assert e["norm"] == pytest.approx(1 / 3)


@given(st.floats(0.0, 0.95), st.floats(1.0, 5.0))
def test_implication_q_equals_r_is_the_input_bound(gamma, q):
    e = est.implication_exponents(gamma, q, q)
    assert e["F"] == pytest.approx(1.0)
    assert e["norm"] == pytest.approx(gamma)


def test_implication_preconditions():
    with pytest.raises(est.EstimateError):
        est.implication_exponents(1.0, 1.0, 1.0)
    with pytest.raises(est.EstimateError):
        est.implication_exponents(0.5, 1.0, 2.0)


def test_two_regime_takes_the_minimum():
    P = est.EstimateParams(m=2.0, N=1, norm_u0_L1=1.0, p=math.inf, CJp=0.4)
    b = est.smoothing_bound("zero_order", np.geomspace(1e-3, 10, 50), P)
    assert np.all(b["bound"] <= b["paper_bound"])
    assert set(b["paper_branch"]) == {"early", "late"}


def test_missing_constant_names_the_assumption():
    P = est.EstimateParams(m=2.0, N=1, norm_u0_L1=1.0, alpha=1.0)
    with pytest.raises(est.EstimateError, match="G1 classification"):
        est.smoothing_bound("G1", np.array([1.0]), P)


def test_absolute_bound_on_ode(ode):
    P = est.EstimateParams(m=2.0, N=1, norm_u0_L1=ode.u0.integral(), C1=1.0)
    rep = est.check_smoothing(ode, P, "absolute", slack=0.0)
    assert rep.passed and rep.margin_min >= 0


def test_fundamental_bound_on_ode(ode):
    assert est.check_fundamental_bound(ode, None).passed


def test_resolvent_variant_skips_when_lambda_small(ode):
    rep = est.check_fundamental_bound(ode, None, variant="resolvent")
    assert rep.data_table == []
    assert rep.notes["lambda_below_threshold"] > 0


def test_fundamental_needs_superlinear_m():
    g = Grid(1, 8, 1.0)
    tr = evolve(Identity(), Field.constant(g, 2.0), 1.1, TimeGrid.uniform(0.1, 0.01))
    with pytest.raises(est.EstimateError):
        est.check_fundamental_bound(tr, None)


def test_ode_decay_slope():
    g = Grid(1, 8, 1.0)
    tr = evolve(Identity(), Field.constant(g, 2.0), 2.0, TimeGrid.geometric(1000.0, 1e-3, 1.05, dt_max=2.0))
    rep = est.check_decay_exponent(tr, (100.0, 1000.0), -1.0, rel_tol=0.02)
    assert rep.passed


def test_fractional_decay_slope(fractional):
    traj, _ = fractional
    assert est.check_decay_exponent(traj, (1.0, 10.0), -0.5, 0.1).passed


def test_laplacian_decay_slope():
    g = Grid(1, 1024, 64.0)
    cfg = EllipticSolveConfig(positivity_clamp=False, allow_sign_change=True)
    tr = evolve(Laplacian(), initial_datum(g, "gaussian", width=0.5), 2.0,
                TimeGrid.geometric(30.0, 1e-3, 1.05, dt_max=0.05), cfg)
    assert est.check_decay_exponent(tr, (3.0, 30.0), -1 / 3, 0.1).passed


def test_fractional_smoothing_g1(fractional):
    traj, kern = fractional
    P = est.EstimateParams.from_kernel(kern, 2.0, traj.u0.integral())
    rep = est.check_smoothing(traj, P, "G1")
    assert rep.margin_min >= -1e-6
    assert rep.notes["skipped"]["unresolved"] > 0


def test_fractional_fundamental_bound(fractional):
    traj, kern = fractional
    rep = est.check_fundamental_bound(traj, kern, n_samples=32)
    assert len(rep.data_table) == 32
    assert rep.margin_min >= -1e-6


def test_fractional_resolvent_fundamental_bound(fractional):
    traj, _ = fractional
    res = green_resolvent(traj.spec, traj.grid)
    assert est.check_fundamental_bound(traj, res, variant="resolvent").margin_min >= -1e-6


def test_fractional_implications(fractional):
    traj, _ = fractional
    rep = est.check_smoothing_implications(traj, gamma=est.theta(2.0, 1.0, 1), r=1.0, p=3.0)
    assert rep.margin_min >= -1e-6


def test_fundamental_margins_invariant_under_scaling():
    g = Grid(1, 256, 32.0)
    spec = FractionalLaplacian(1.0)
    kern = green_function(spec, g)
    traj = evolve(spec, initial_datum(g, "gaussian"), 2.0, TimeGrid.uniform(2.0, 0.01))
    a = est.check_fundamental_bound(traj, kern, seed=3)
    b = est.check_fundamental_bound(rescale_trajectory(traj, 4.0), kern, seed=3)
    ma = np.array([r["margin"] for r in a.data_table])
    mb = np.array([r["margin"] for r in b.data_table])
    assert np.allclose(ma, mb, atol=1e-10)


def test_zero_order_contrast():
    g = Grid(1, 512, 32.0)
    spec = convolution_operator(g, "gaussian", 1.0)
    u0 = initial_datum(g, "noise", seed=10)
    tg = TimeGrid.geometric(0.1, 1e-4, 1.1, dt_max=0.002)
    assert est.check_sup_retention(evolve(spec, u0, 1.0, tg), 0.9).passed
    non = evolve(spec, u0, 2.0, tg)
    P = est.EstimateParams(m=2.0, N=1, norm_u0_L1=u0.integral(), p=math.inf, CJp=spec.lp_constant(math.inf))
    assert est.check_smoothing(non, P, "zero_order").passed
    assert est.check_fundamental_zero_order(non, spec.kernel).passed


def test_reports_are_deterministic(fractional):
    traj, kern = fractional
    a = est.check_fundamental_bound(traj, kern, seed=5).to_dict()
    b = est.check_fundamental_bound(traj, kern, seed=5).to_dict()
    assert a == b


def test_unresolved_and_contaminated_snapshots_are_skipped():
    g = Grid(1, 64, 8.0)
    tr = evolve(FractionalLaplacian(1.0), initial_datum(g, "delta"), 2.0, TimeGrid.uniform(20.0, 0.5))
    snaps, skipped = est.eligible_snapshots(tr, contamination_tol=1e-3)
    assert skipped["contaminated"] > 0
    assert len(snaps) + sum(skipped.values()) == len(tr.fields) - 1


def test_empty_check_fails_honestly():
    g = Grid(1, 64, 8.0)
    tr = evolve(FractionalLaplacian(1.0), initial_datum(g, "delta"), 2.0, TimeGrid.uniform(1e-3, 1e-3))
    P = est.EstimateParams(m=2.0, N=1, norm_u0_L1=1.0, C1=1.0)
    rep = est.check_smoothing(tr, P, "absolute")
    assert not rep.passed and math.isnan(rep.margin_min)
