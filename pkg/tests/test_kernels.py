import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nldiff.grid import Field, Grid, convolve, lp_norm
from nldiff.kernels import (KernelError, classify_assumptions, compute_kernel, consistency_residual,
                            default_window, green_function, negative_mass_fraction, green_resolvent, green_time_quadrature, heat_kernel,
                            linear_implies_nonlinear_integral, radial_exponent, radial_profile, refinement_trend,
                            two_regime_exponents, window_deviation)
from nldiff.operators import (BesselResolvent, FractionalLaplacian, GeometricStable, Identity, Laplacian,
                              RelativisticSchrodinger, Sum, convolution_operator)

G3 = Grid(3, 128, 32.0)


@pytest.fixture(scope="module")
def frac3():
    return classify_assumptions(green_function(FractionalLaplacian(1.0), G3))


@pytest.fixture(scope="module")
def bessel3():
    return classify_assumptions(green_function(BesselResolvent(1.0), G3))


def test_laplacian_heat_kernel_is_gaussian():
    g = Grid(1, 1024, 16.0)
    t = 0.01
    H = heat_kernel(Laplacian(), g, t).kernel.values
    x = g.axis
    exact = (4 * np.pi * t) ** -0.5 * np.exp(-x**2 / (4 * t))
    sel = np.abs(x) <= 4.0
    assert np.abs(H[sel] - exact[sel]).max() <= 1e-6


@pytest.mark.parametrize("spec", [FractionalLaplacian(1.0), Laplacian(), GeometricStable(1.0),
                                  RelativisticSchrodinger(1.0, 1.0)])
def test_heat_kernel_has_unit_mass(spec):
    assert heat_kernel(spec, Grid(2, 64, 8.0), 0.3).mass == pytest.approx(1.0, abs=1e-8)


def test_identity_heat_kernel_mass():
    assert heat_kernel(Identity(), Grid(1, 64, 8.0), 0.7).mass == pytest.approx(math.exp(-0.7), rel=1e-12)


def test_bessel_heat_kernel_is_sub_markov():
    assert heat_kernel(BesselResolvent(1.0), Grid(1, 64, 8.0), 0.5).mass <= 1 + 1e-8


def test_heat_kernel_rejects_nonpositive_time():
    with pytest.raises(KernelError):
        heat_kernel(Laplacian(), Grid(1, 64, 8.0), 0.0)


def test_under_resolved_flag():
    g = Grid(1, 64, 8.0)
    assert heat_kernel(FractionalLaplacian(1.0), g, 1e-4).flags["under_resolved"]
    assert not heat_kernel(FractionalLaplacian(1.0), g, 1.0).flags["under_resolved"]


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.sampled_from([0.5, 1.0, 2.0]))
def test_semigroup_property(t1, t2, alpha):
    g = Grid(1, 256, 32.0)
    spec = FractionalLaplacian(alpha)
    lhs = convolve(heat_kernel(spec, g, t1).kernel, heat_kernel(spec, g, t2).kernel).values
    rhs = heat_kernel(spec, g, t1 + t2).kernel.values
    sel = g.radius <= g.side / 8
    assert np.abs(lhs[sel] - rhs[sel]).max() <= 1e-6 * np.abs(rhs[sel]).max()


@pytest.mark.parametrize("spec", [FractionalLaplacian(1.0), Laplacian(), RelativisticSchrodinger(1.0, 1.0)])
def test_resolvent_mass_is_one(spec):
    assert green_resolvent(spec, Grid(2, 64, 8.0)).mass == pytest.approx(1.0, abs=1e-8)


def test_identity_resolvent_is_half_delta():
    g = Grid(1, 32, 4.0)
    rep = green_resolvent(Identity(), g)
    assert np.allclose(rep.kernel.values, 0.5 * Field.delta(g).values, atol=1e-12)
    assert rep.mass == pytest.approx(0.5)


@pytest.mark.parametrize("spec", [FractionalLaplacian(1.0), BesselResolvent(1.0), GeometricStable(1.0),
                                  Sum(Laplacian(), FractionalLaplacian(0.5))])
def test_resolvent_consistency(spec):
    assert consistency_residual(green_resolvent(spec, Grid(3, 32, 8.0))) <= 1e-6


@pytest.mark.parametrize("spec", [FractionalLaplacian(1.0), BesselResolvent(1.0), Laplacian()])
def test_kernels_are_even(spec):
    g = Grid(2, 32, 8.0)
    for rep in (heat_kernel(spec, g, 0.5), green_resolvent(spec, g)):
        v = rep.kernel.values
        mirrored = np.roll(np.flip(v, axis=(0, 1)), 1, axis=(0, 1))
        assert np.abs(v - mirrored).max() <= 1e-12 * np.abs(v).max()


def test_smooth_heat_kernel_is_nonnegative():
    rep = heat_kernel(Laplacian(), Grid(3, 64, 16.0), 0.5)
    assert rep.kernel.values.min() >= -1e-8 * rep.kernel.values.max()


@pytest.mark.parametrize("spec", [FractionalLaplacian(1.0), BesselResolvent(1.0), GeometricStable(1.0),
                                  Laplacian()])
def test_singular_kernels_have_small_negative_mass(spec):
    g = Grid(3, 64, 16.0)
    for rep in (green_resolvent(spec, g), heat_kernel(spec, g, 0.5)):
        assert negative_mass_fraction(rep.kernel) <= 1e-2


@pytest.mark.xfail(strict=True, reason="a kernel singular at the origin keeps spectral-truncation "
                                       "undershoots near 1e-4 of its max")
def test_singular_resolvent_nonnegative_to_roundoff():
    rep = green_resolvent(FractionalLaplacian(1.0), Grid(3, 64, 16.0))
    assert rep.kernel.values.min() >= -1e-8 * rep.kernel.values.max()


@pytest.mark.parametrize("spec", [FractionalLaplacian(1.0), Laplacian(), RelativisticSchrodinger(1.0, 1.0)])
def test_resolvent_below_green_on_window(spec):
    g = Grid(3, 64, 16.0)
    res, gr = green_resolvent(spec, g).kernel.values, green_function(spec, g).kernel.values
    lo, hi = default_window(g)
    sel = (g.radius >= lo) & (g.radius <= hi)
    assert np.all(res[sel] <= gr[sel] + 1e-8 * gr.max())


def test_fractional_green_exponent(frac3):
    assert radial_exponent(frac3)["slope"] == pytest.approx(-2.0, rel=0.05)


def test_bessel_green_mass(bessel3):
    assert lp_norm(bessel3.kernel, 1) == pytest.approx(1.0, rel=0.01)


def test_geometric_stable_resolvent_norms():
    g = Grid(3, 64, 32.0)
    assert lp_norm(green_resolvent(GeometricStable(1.0), g).kernel, 1) == pytest.approx(1.0, rel=0.01)
    trend = refinement_trend(GeometricStable(1.0), 3, 32.0, [16, 32, 64], p_values=(2.0,))
    assert all(x > 1.5 for x in trend["growth"]["L2"])


def test_sum_two_exponents():
    res = two_regime_exponents(Sum(Laplacian(), FractionalLaplacian(1.0)), 3, 128, 2.0, 128.0)
    near, far = res["near"]["slope"], res["far"]["slope"]
    assert abs(near + 1) < abs(near + 2)
    assert far == pytest.approx(-2.0, rel=0.1)


def test_quadrature_reproduces_bessel_green():
    # (I - Delta)^{1/2} = I + relativistic operator with kappa = 1
    g = Grid(3, 64, 16.0)
    quad = green_time_quadrature(RelativisticSchrodinger(1.0, 1.0), g, discount=True)
    ref = green_function(BesselResolvent(1.0), g)
    assert window_deviation(quad.kernel, ref.kernel) <= 0.02
    assert quad.mass == pytest.approx(1.0, abs=1e-6)


def test_quadrature_laplacian_newtonian_potential():
    g = Grid(3, 64, 16.0)
    quad = green_time_quadrature(Laplacian(), g)
    r, prof = radial_profile(quad.kernel)
    lo, hi = default_window(g)
    sel = (r >= lo) & (r <= hi)
    # zero-mean periodic version: compare after removing the best constant offset
    newton = 1 / (4 * np.pi * r[sel])
    offset = np.mean(prof[sel] - newton)
    assert np.abs(prof[sel] - offset - newton).max() <= 0.03 * newton.max()


def test_quadrature_rejects_short_grid():
    with pytest.raises(KernelError):
        green_time_quadrature(Laplacian(), Grid(1, 64, 8.0), t_grid=np.geomspace(1, 10, 5))


def test_fractional_classification(frac3):
    assert "G1" in frac3.classification and "G3" in frac3.classification
    assert frac3.fitted["C_p_stable"][1.2]
    assert math.isfinite(frac3.fitted["K1"]) and math.isfinite(frac3.fitted["K2"])


def test_bessel_classification(bessel3):
    assert "G2" in bessel3.classification
    assert "G3" not in bessel3.classification
    assert bessel3.fitted["C1"] == pytest.approx(1.0, rel=0.01)


def test_geometric_stable_classification():
    rep = classify_assumptions(green_function(GeometricStable(1.0), G3))
    assert rep.classification == ("none",)


def test_classification_needs_green_report():
    with pytest.raises(KernelError):
        classify_assumptions(heat_kernel(Laplacian(), Grid(1, 64, 8.0), 1.0))


def test_linear_to_nonlinear_integral_power():
    # int_0^inf e^{-t} t^{-1/2} dt = Gamma(1/2)
    res = linear_implies_nonlinear_integral(lambda t: t**-3.0, 1.2)
    assert res["finite"]
    assert res["value"] == pytest.approx(math.gamma(0.5), rel=1e-3)


def test_linear_to_nonlinear_integral_exponential_growth():
    # e^{-t} (t^{-3} e^t)^{1/6} = e^{-5t/6} t^{-1/2}; integral Gamma(1/2) (6/5)^{1/2}
    res = linear_implies_nonlinear_integral(lambda t: t**-3.0 * math.exp(t), 1.2)
    assert res["finite"]
    assert res["value"] == pytest.approx(math.gamma(0.5) * (6 / 5) ** 0.5, rel=1e-3)


def test_linear_to_nonlinear_integral_divergent():
    assert not linear_implies_nonlinear_integral(lambda t: t**-3.0, 2.0)["finite"]


def test_compute_kernel_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("NLDIFF_CACHE_DIR", str(tmp_path))
    g = Grid(2, 32, 8.0)
    a = compute_kernel(FractionalLaplacian(1.0), g, "green")
    b = compute_kernel(FractionalLaplacian(1.0), g, "green")
    assert len(list(tmp_path.glob("kernel-*.npz"))) == 1
    assert np.array_equal(a.kernel.values, b.kernel.values)


def test_zero_order_kernels_cache_by_content(tmp_path, monkeypatch):
    monkeypatch.setenv("NLDIFF_CACHE_DIR", str(tmp_path))
    g = Grid(1, 64, 8.0)
    compute_kernel(convolution_operator(g, "gaussian", 1.0), g, "resolvent")
    compute_kernel(convolution_operator(g, "box", 1.0), g, "resolvent")
    assert len(list(tmp_path.glob("kernel-*.npz"))) == 2
