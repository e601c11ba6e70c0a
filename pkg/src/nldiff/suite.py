"""The acceptance matrix: twelve numerical criteria, each a list of measured lines.

``quick=True`` halves the grids (except the classification matrix, whose
refinement ladder needs n = 128) and doubles every tolerance. Tags let
``--only`` select a subset (``green`` selects the kernel criteria).
"""

from __future__ import annotations

import dataclasses
import math
import time

import numpy as np

from . import estimates as est
from .elliptic import EllipticSolveConfig
from .evolution import TimeGrid, evolve, initial_datum, linear_semigroup, ode_solution, rescale_trajectory
from .grid import Field, Grid, convolve, convolve_direct, dft, idft, lp_norm
from .inequalities import dirichlet_energies, energy_residuals, random_band_limited, stroock_varopoulos_check
from .kernels import (classify_assumptions, consistency_residual, green_function, green_resolvent,
                      radial_exponent, radial_profile, refinement_trend)
from .operators import (BesselResolvent, FractionalLaplacian, GeometricStable, Identity, Laplacian, Sum,
                        convolution_operator)


@dataclasses.dataclass
class Line:
    label: str
    value: float
    bound: str
    ok: bool


@dataclasses.dataclass
class CriterionResult:
    number: int
    name: str
    reference: str
    lines: list[Line]
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(line.ok for line in self.lines)

    def summary_line(self) -> str:
        worst = next((ln for ln in self.lines if not ln.ok), self.lines[-1] if self.lines else None)
        detail = f"{worst.label} = {worst.value:.4g} ({worst.bound})" if worst else "no lines"
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {detail} [{self.seconds:.1f}s]"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "reference": self.reference, "passed": self.passed,
                "seconds": self.seconds, "lines": [dataclasses.asdict(ln) for ln in self.lines]}


def _le(label, value, tol) -> Line:
    return Line(label, float(value), f"<= {tol:g}", bool(value <= tol))


def _ge(label, value, tol) -> Line:
    return Line(label, float(value), f">= {tol:g}", bool(value >= tol))


def _within(label, value, target, rel) -> Line:
    err = abs(value - target) / abs(target)
    return Line(label, float(value), f"{target:g} +/- {100 * rel:g}%", bool(err <= rel))


class Settings:
    def __init__(self, quick: bool):
        self.quick = quick
        self.tol = 2.0 if quick else 1.0

    def n(self, n: int) -> int:
        return n // 2 if self.quick else n


# ------------------------------------------------------------------ 1

def spectral_substrate(s: Settings) -> list[Line]:
    rng = np.random.default_rng(1)
    lines = []
    worst_rt, worst_pv = 0.0, 0.0
    for dim, n in ((1, s.n(1024)), (2, s.n(128)), (3, s.n(32))):
        g = Grid(dim, n, 7.0)
        u = Field(g, rng.standard_normal(g.shape))
        sf = dft(u)
        worst_rt = max(worst_rt, np.abs(idft(sf).values - u.values).max() / np.abs(u.values).max())
        lhs = np.sum(u.values**2) * g.cell_volume
        rhs = np.sum(np.abs(sf.coefficients) ** 2) / g.side**dim
        worst_pv = max(worst_pv, abs(lhs - rhs) / lhs)
    lines.append(_le("roundtrip relative error", worst_rt, 1e-10 * s.tol))
    lines.append(_le("Parseval relative error", worst_pv, 1e-9 * s.tol))
    worst_cv = 0.0
    for dim, n in ((1, 64), (2, s.n(64))):
        g = Grid(dim, n, 5.0)
        u = Field(g, rng.random(g.shape))
        v = Field(g, rng.random(g.shape))
        a, b = convolve(u, v), convolve_direct(u, v)
        worst_cv = max(worst_cv, np.abs(a.values - b.values).max() / np.abs(b.values).max())
    lines.append(_le("convolve vs direct sum", worst_cv, 1e-8 * s.tol))
    return lines


# ------------------------------------------------------------------ 2

def linear_exactness(s: Settings) -> list[Line]:
    g = Grid(1, s.n(256), 32.0)
    spec = FractionalLaplacian(1.0)
    u0 = initial_datum(g, "gaussian", width=1.0)
    T = 1.0
    exact = linear_semigroup(spec, u0, T)
    errs = []
    for dt in (0.1, 0.05, 0.025, 0.0125):
        tr = evolve(spec, u0, 1.0, TimeGrid.uniform(T, dt), snapshots="geometric")
        errs.append(np.abs(tr.fields[-1].values - exact.values).max() / np.abs(exact.values).max())
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(3)]
    return [Line(f"order dt={d:g}->{d / 2:g}", o, f"1.0 +/- {0.1 * s.tol:g}", abs(o - 1) <= 0.1 * s.tol)
            for d, o in zip((0.1, 0.05, 0.025), orders)]


# ------------------------------------------------------------------ 3

def ode_oracle(s: Settings) -> list[Line]:
    g = Grid(1, 8, 1.0)
    y0, m, dt = 2.0, 2.0, 1e-3
    u0 = Field.constant(g, y0)
    coarse = evolve(Identity(), u0, m, TimeGrid.uniform(1.0, dt)).fields[-1].values[0]
    fine_traj = evolve(Identity(), u0, m, TimeGrid.uniform(1.0, dt / 2), snapshots="all")
    fine = fine_traj.fields[-1].values[0]
    rich = 2 * fine - coarse
    exact = ode_solution(y0, 1.0, m)
    P = est.EstimateParams(m=m, N=1, norm_u0_L1=u0.integral(), C1=1.0)
    rep = est.check_smoothing(fine_traj, P, "absolute", slack=0.0)
    return [_le("Richardson relative error at t=1", abs(rich - exact) / exact, 1e-6 * s.tol),
            _ge("absolute-bound margin (4/t)", rep.margin_min, 0.0)]


# ------------------------------------------------------------------ 4

def green_functions(s: Settings) -> list[Line]:
    g = Grid(3, s.n(128), 32.0)
    bessel = green_function(BesselResolvent(1.0), g)
    frac = green_function(FractionalLaplacian(1.0), g)
    res = green_resolvent(FractionalLaplacian(1.0), g)
    return [
        _within("Bessel Green L1 norm", lp_norm(bessel.kernel, 1), 1.0, 0.01 * s.tol),
        _within("fractional Green radial exponent", radial_exponent(frac)["slope"], -2.0, 0.05 * s.tol),
        _le("(I-L) G - delta residual", consistency_residual(res), 1e-6 * s.tol),
    ]


# ------------------------------------------------------------------ 5

def classification_matrix(s: Settings) -> list[Line]:
    # classification is a refinement statement, so quick mode keeps the full grid
    n = 128
    lines = []
    frac = classify_assumptions(green_function(FractionalLaplacian(1.0), Grid(3, n, 32.0)), p_values=(1.2, 2.0))
    lines.append(Line("fractional: G1 and G3 listed", float("G1" in frac.classification and "G3" in
                                                             frac.classification), "== 1", "G1" in
                      frac.classification and "G3" in frac.classification))
    lines.append(Line("fractional: C_p stable at p=1.2 < N/(N-alpha)", float(frac.fitted["C_p_stable"][1.2]),
                      "== 1", bool(frac.fitted["C_p_stable"][1.2])))
    bes = classify_assumptions(green_function(BesselResolvent(1.0), Grid(3, n, 32.0)))
    lines.append(Line("Bessel: G2 listed, G3 not", float("G2" in bes.classification), "== 1",
                      "G2" in bes.classification and "G3" not in bes.classification))
    lines.append(_within("Bessel: C1", bes.fitted["C1"], 1.0, 0.01 * s.tol))

    spec = Sum(Laplacian(), FractionalLaplacian(1.0))
    near = green_function(spec, Grid(3, n, 2.0))
    far = green_function(spec, Grid(3, n, 128.0))
    sn, sf = radial_exponent(near)["slope"], radial_exponent(far)["slope"]
    lines.append(Line("Sum: near slope closer to -(N-2) than -(N-alpha)", sn, "|s+1| < |s+2|",
                      abs(sn + 1) < abs(sn + 2)))
    lines.append(_within("Sum: far slope", sf, -2.0, 0.1 * s.tol))
    for label, rep, power in (("near", near, 1.0), ("far", far, 2.0)):
        r, v = radial_profile(rep.kernel)
        lo, hi = rep.window
        sel = (r >= lo) & (r <= hi)
        scaled = v[sel] * r[sel] ** power
        lines.append(_le(f"Sum: {label} r^{power:g} G variation", scaled.max() / scaled.min(), 3.0))

    gs = classify_assumptions(green_function(GeometricStable(1.0), Grid(3, n, 32.0)))
    lines.append(Line("geometric stable: classification none", float(gs.classification == ("none",)), "== 1",
                      gs.classification == ("none",)))
    tr = refinement_trend(GeometricStable(1.0), 3, 32.0, [n // 4, n // 2, n], p_values=(1.2,))
    kg, lg = tr["growth"]["K1_small_R"], tr["growth"]["L1.2"]
    ratios = [row["K1_ratio"] for row in tr["rows"]]
    lines.append(Line("geometric stable: K1 ratio increasing under refinement", ratios[-1] - ratios[0], "> 0",
                      bool(np.all(np.diff(ratios) > 0))))
    lines.append(Line("geometric stable: K1(4h) growth per refinement", min(kg), ">= 1.1, not contracting",
                      min(kg) >= 1.1 and kg[-1] >= kg[0]))
    lines.append(Line("geometric stable: resolvent L^1.2 growth per refinement", min(lg), ">= 1.1, not contracting",
                      min(lg) >= 1.1 and abs(lg[-1] - 1) >= 0.8 * abs(lg[0] - 1)))
    return lines


# ------------------------------------------------------------------ 6, 7

_FRACTIONAL_RUNS: dict = {}


def fractional_run(s: Settings):
    """The 1-D fractional delta run shared by criteria 6 and 7 (cached per mode)."""
    if s.quick not in _FRACTIONAL_RUNS:
        g = Grid(1, s.n(1024), 64.0)
        spec = FractionalLaplacian(1.0)
        u0 = initial_datum(g, "delta")
        traj = evolve(spec, u0, 2.0, TimeGrid.geometric(30.0, 1e-4, 1.05, dt_max=0.05))
        kern = classify_assumptions(green_function(spec, g), alpha=1.0)
        _FRACTIONAL_RUNS[s.quick] = (traj, kern)
    return _FRACTIONAL_RUNS[s.quick]


def nonlinear_smoothing(s: Settings) -> list[Line]:
    traj, kern = fractional_run(s)
    fit = est.fit_decay_exponent(traj, (1.0, 10.0))
    P = est.EstimateParams.from_kernel(kern, 2.0, traj.u0.integral())
    rep = est.check_smoothing(traj, P, "G1")
    return [_within("decay slope on [1, 10]", fit["slope"], -0.5, 0.1 * s.tol),
            _ge("G1 smoothing margin", rep.margin_min, -1e-6 * s.tol),
            _ge("snapshots checked", len(rep.data_table), 10)]


def fundamental_bound(s: Settings) -> list[Line]:
    traj, kern = fractional_run(s)
    rep = est.check_fundamental_bound(traj, kern, n_samples=32, seed=0)
    return [_ge("fundamental-bound margin", rep.margin_min, -1e-6 * s.tol),
            _ge("sampled pairs", len(rep.data_table), 32)]


# ------------------------------------------------------------------ 8

def structural_properties(s: Settings) -> list[Line]:
    g = Grid(1, s.n(256), 32.0)
    spec = FractionalLaplacian(1.0)
    tg = TimeGrid.uniform(1.0, 0.01)
    rng = np.random.default_rng(8)
    u0 = initial_datum(g, "noise", seed=8)
    traj = evolve(spec, u0, 2.0, tg)
    lp = est.check_lp_decay(traj, rel_tol=1e-8 * s.tol)
    mass = est.check_mass(traj, rel_tol=1e-8 * s.tol)
    mono = est.check_time_monotonicity(traj, rel_tol=1e-6 * s.tol)
    worst_cmp = math.inf
    for k in range(10):
        a = initial_datum(g, "noise", seed=100 + k)
        b = Field(g, a.values + rng.random(g.shape) * (a.values > 0))
        lo = evolve(spec, a, 2.0, tg)
        hi = evolve(spec, b, 2.0, tg)
        worst_cmp = min(worst_cmp, est.check_comparison(lo, hi, rel_tol=1e-8 * s.tol).margin_min)
    return [_ge("Lp-decay margin (p = 1, 2, inf)", lp.margin_min, 0.0),
            _ge("comparison margin, 10 ordered pairs", worst_cmp, 0.0),
            _ge("mass conservation margin", mass.margin_min, 0.0),
            _ge("time-monotonicity margin", mono.margin_min, 0.0)]


# ------------------------------------------------------------------ 9

def stroock_varopoulos(s: Settings) -> list[Line]:
    g = Grid(2, s.n(64), 16.0)
    specs = (FractionalLaplacian(1.0), Laplacian(), convolution_operator(g, "gaussian", 1.0))
    rng = np.random.default_rng(9)
    worst = math.inf
    kmax = max(g.n // 16, 1)
    fields = []
    for _ in range(100):
        f = random_band_limited(g, int(rng.integers(1, kmax + 1)), rng)
        lo, hi = f.values.min(), f.values.max()
        fields.append(Field(g, f.values - lo + 0.05 * (hi - lo)))
    for f in fields:
        for spec in specs:
            for p in (2, 3):
                for m in (2, 3):
                    r = stroock_varopoulos_check(spec, f, p, m)
                    worst = min(worst, r["slack"] / abs(r["lhs"]))
    eq = max(abs(stroock_varopoulos_check(spec, f, 2, 1)["slack"]) / abs(stroock_varopoulos_check(spec, f, 2, 1)["lhs"])
             for spec in specs for f in fields[:10])
    return [_ge("worst relative slack", worst, -1e-8 * s.tol),
            _le("equality case (p, m) = (2, 1)", eq, 1e-12 * s.tol)]


# ------------------------------------------------------------------ 10

def zero_order_contrast(s: Settings) -> list[Line]:
    g = Grid(1, s.n(512), 32.0)
    spec = convolution_operator(g, "gaussian", 1.0)
    u0 = initial_datum(g, "noise", seed=10)
    tg = TimeGrid.geometric(0.1, 1e-4, 1.1, dt_max=0.002)
    lin = evolve(spec, u0, 1.0, tg)
    non = evolve(spec, u0, 2.0, tg)
    keep = est.check_sup_retention(lin, 0.9)
    P = est.EstimateParams(m=2.0, N=1, norm_u0_L1=u0.integral(), p=math.inf, CJp=spec.lp_constant(math.inf))
    rep = est.check_smoothing(non, P, "zero_order")
    return [_ge("m=1: min ||u(t)||_inf / ||u0||_inf", min(r["linf"] for r in keep.data_table) / u0.sup(), 0.9),
            _ge("m=2: two-regime bound margin", rep.margin_min, -1e-6 * s.tol)]


# ------------------------------------------------------------------ 11

def scaling_consistency(s: Settings) -> list[Line]:
    g = Grid(1, s.n(256), 32.0)
    spec = FractionalLaplacian(1.0)
    m, dt, T = 2.0, 0.01, 1.0
    u0 = initial_datum(g, "gaussian", width=1.0)
    lines = []
    for lam in (2, 4):
        a = lam ** (1 / (m - 1))
        direct = evolve(spec, u0 * a, m, TimeGrid.uniform(T, dt), snapshots="all")
        base = evolve(spec, u0, m, TimeGrid.uniform(lam * T, dt), snapshots="all")
        resc = rescale_trajectory(base, lam)
        # direct step k sits at t = k dt; the rescaled one at k' dt / lam
        diff = max(np.abs(direct.fields[k].values - resc.fields[lam * k].values).max()
                   for k in range(len(direct.fields)))
        rel = diff / max(u.sup() for u in direct.fields)
        tol = 5 * (dt + g.h) * s.tol
        lines.append(_le(f"Lambda={lam}: relative sup difference", rel, tol))
    return lines


# ------------------------------------------------------------------ 12

def energy_identities(s: Settings) -> list[Line]:
    g = Grid(1, s.n(256), 32.0)
    u0 = initial_datum(g, "gaussian", width=1.0)
    lines = []
    for label, spec in (("fractional", FractionalLaplacian(1.0)), ("0-order", convolution_operator(g, "gaussian", 1.0))):
        res, worst_mono = [], math.inf
        for dt in (4e-3, 2e-3, 1e-3):
            tr = evolve(spec, u0, 2.0, TimeGrid.uniform(0.5, dt), snapshots="all")
            res.append(energy_residuals(tr).max())
            E = dirichlet_energies(tr)
            worst_mono = min(worst_mono, float(np.min((E[:-1] * (1 + 1e-8 * s.tol) - E[1:]) / E[:-1])))
        order = min(math.log2(res[i] / res[i + 1]) for i in range(2))
        lines.append(_ge(f"{label}: energy-identity residual order", order, 1 - 0.1 * s.tol))
        lines.append(_ge(f"{label}: Q[u^m] monotonicity margin", worst_mono, 0.0))
    return lines


# ------------------------------------------------------------------ registry

CRITERIA = [
    (1, "spectral substrate", "substrate", "transform pair, Parseval, convolution", spectral_substrate),
    (2, "linear exactness", "linear", "implicit scheme, m = 1", linear_exactness),
    (3, "ODE oracle", "ode", "Y' = -Y^m and the absolute bound with C1 = 1", ode_oracle),
    (4, "Green functions", "green", "Bessel L1 norm, fractional exponent, resolvent consistency", green_functions),
    (5, "classification matrix", "green", "Green-function assumptions per operator", classification_matrix),
    (6, "nonlinear smoothing", "smoothing", "L1-Linf smoothing under local integrability", nonlinear_smoothing),
    (7, "fundamental upper bound", "smoothing", "fundamental pointwise upper bound", fundamental_bound),
    (8, "structural properties", "structural", "Lp decay, comparison, mass, time monotonicity",
     structural_properties),
    (9, "Stroock-Varopoulos", "inequalities", "Stroock-Varopoulos inequality", stroock_varopoulos),
    (10, "0-order contrast", "zero-order", "no linear but nonlinear smoothing for 0-order operators",
     zero_order_contrast),
    (11, "scaling consistency", "scaling", "time scaling of solutions", scaling_consistency),
    (12, "energy identities", "energy", "Lp-energy identity and Dirichlet-energy decay", energy_identities),
]

TAGS = sorted({c[2] for c in CRITERIA})


def select(only: list[str] | None = None) -> list[tuple]:
    if not only:
        return list(CRITERIA)
    picked = []
    for c in CRITERIA:
        if str(c[0]) in only or c[2] in only or c[1] in only:
            picked.append(c)
    unknown = [o for o in only if not any(o in (str(c[0]), c[1], c[2]) for c in CRITERIA)]
    if unknown:
        raise ValueError(f"unknown criteria {unknown}; use numbers 1-12 or tags {TAGS}")
    return picked


def run_criterion(number: int, quick: bool = False) -> CriterionResult:
    entry = next(c for c in CRITERIA if c[0] == number)
    t = time.perf_counter()
    lines = entry[4](Settings(quick))
    return CriterionResult(entry[0], entry[1], entry[3], lines, time.perf_counter() - t)


def run_suite(only: list[str] | None = None, quick: bool = False, echo=print) -> list[CriterionResult]:
    results = []
    for c in select(only):
        r = run_criterion(c[0], quick)
        if echo:
            echo(r.summary_line())
        results.append(r)
    return results
