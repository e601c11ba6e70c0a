"""Functional-inequality quotients for the quadratic form ``Q[f] = <f, (-L) f>``.

A quotient being bounded over a function class expresses the corresponding
inequality; finite grids cannot prove unboundedness, so families are scanned
across widths and a growth trend is reported instead.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .grid import Field, Grid, inner, lp_norm, power
from .operators import OperatorSpec, apply, quadratic_form


class InequalityError(ValueError):
    pass


def two_star(alpha: float, N: int) -> float:
    """Sobolev exponent ``2N/(N - alpha)``; needs ``N > alpha``."""
    if not N > alpha:
        raise InequalityError(f"2* = 2N/(N-alpha) needs N > alpha (N={N}, alpha={alpha})")
    return 2.0 * N / (N - alpha)


def nash_theta(alpha: float, N: int) -> float:
    s = two_star(alpha, N)
    return 0.5 * (s - 2) / (s - 1)


def gns_theta(p_tilde: float, q_tilde: float, two_star: float) -> float:
    return (q_tilde / p_tilde) * (two_star - p_tilde) / (two_star - q_tilde)


def _form(spec: OperatorSpec, f: Field) -> float:
    if not np.any(f.values):
        raise InequalityError("quotients are undefined for f = 0")
    q = quadratic_form(spec, f)
    if q <= 0:
        raise InequalityError("Q[f] vanishes; f lies in the kernel of the operator")
    return q


def nash_quotient(spec: OperatorSpec, f: Field, alpha: float, N: int) -> float:
    """``||f||_2 / (||f||_1^t Q[f]^{(1-t)/2})`` with ``t = (2*-2)/(2(2*-1))``."""
    t = nash_theta(alpha, N)
    q = _form(spec, f)
    return lp_norm(f, 2) / (lp_norm(f, 1) ** t * q ** ((1 - t) / 2))


def sobolev_quotient(spec: OperatorSpec, f: Field, alpha: float, N: int) -> float:
    """``||f||_{2*} / Q[f]^{1/2}``."""
    return lp_norm(f, two_star(alpha, N)) / math.sqrt(_form(spec, f))


def gns_quotient(spec: OperatorSpec, f: Field, p_tilde: float, q_tilde: float, two_star: float,
                 m: float | None = None) -> float:
    """``||f||_p / (||f||_q^t Q[f]^{(1-t)/2})``, ``t = (q/p)(2*-p)/(2*-q)``.

    ``two_star = 2`` gives the Poincare-family quotient. When ``m`` is given the
    exponents must satisfy ``p in [(1+m)/m, 2)`` and ``q in [1/m, p)``.
    """
    if not 0 < q_tilde < p_tilde:
        raise InequalityError(f"need 0 < q_tilde < p_tilde, got q={q_tilde}, p={p_tilde}")
    if two_star < 2 or p_tilde >= two_star:
        raise InequalityError(f"need 2 <= two_star and p_tilde < two_star, got {two_star}")
    if m is not None:
        if not (1 + m) / m <= p_tilde < 2:
            raise InequalityError(f"p_tilde must lie in [(1+m)/m, 2) = [{(1 + m) / m:g}, 2)")
        if not 1 / m <= q_tilde:
            raise InequalityError(f"q_tilde must be at least 1/m = {1 / m:g}")
    t = gns_theta(p_tilde, q_tilde, two_star)
    q = _form(spec, f)
    return lp_norm(f, p_tilde) / (lp_norm(f, q_tilde) ** t * q ** ((1 - t) / 2))


def poincare_quotient(spec: OperatorSpec, f: Field) -> float:
    """``||f||_2 / Q[f]^{1/2}``."""
    return lp_norm(f, 2) / math.sqrt(_form(spec, f))


def sv_constant(p: float, m: float) -> float:
    return 4 * m * (p - 1) / (p + m - 1) ** 2


def stroock_varopoulos_check(spec: OperatorSpec, u: Field, p: float, m: float) -> dict:
    """``<u^{p-1}, (-L) u^m>`` against ``4m(p-1)/(p+m-1)^2 Q[u^{(p+m-1)/2}]``."""
    if p <= 1 or m < 1:
        raise InequalityError("need p > 1 and m >= 1")
    if u.values.min() < 0:
        raise InequalityError("the Stroock-Varopoulos inequality is stated for u >= 0")
    lhs = inner(power(u, p - 1), apply(spec, power(u, m)))
    rhs = sv_constant(p, m) * quadratic_form(spec, power(u, (p + m - 1) / 2))
    return {"lhs": float(lhs), "rhs": float(rhs), "slack": float(lhs - rhs)}


# ------------------------------------------------------------------ function families

FAMILIES = ("gaussians", "blocks", "two-bumps", "random")


def gaussian_bump(grid: Grid, width: float, center=None) -> Field:
    c = np.zeros(grid.dim) if center is None else np.asarray(center, float)
    x = grid.coordinates()
    r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, c))
    return Field(grid, np.exp(-0.5 * r2 / width**2))


def mollified_block(grid: Grid, half_width: float, edge: float) -> Field:
    """Tensor product of smoothed indicators of ``[-a, a]`` with edge length ``edge``."""
    vals = np.ones(grid.shape)
    for xi in grid.coordinates():
        vals = vals * 0.5 * (np.tanh((half_width - np.abs(xi)) / edge) + 1)
    return Field(grid, vals)


def random_band_limited(grid: Grid, k_max: int, rng: np.random.Generator) -> Field:
    """Random smooth field with Fourier modes ``|k| <= k_max`` (integer wavenumbers)."""
    coeff = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    k = np.meshgrid(*[np.fft.fftfreq(grid.n, 1.0 / grid.n)] * grid.dim, indexing="ij")
    mask = sum(ki**2 for ki in k) <= k_max**2
    vals = np.fft.ifftn(np.where(mask, coeff, 0)).real
    return Field(grid, vals / np.abs(vals).max())


def nonneg_floor(f: Field, floor: float = 0.05) -> Field:
    """Shift so that ``min = floor * (max - min)``."""
    lo, hi = f.values.min(), f.values.max()
    return Field(f.grid, f.values - lo + floor * (hi - lo))


def family(grid: Grid, name: str, samples: int, seed: int = 0, decades: float = 3.0,
           nonneg: bool = True) -> list[tuple[float, Field]]:
    """``samples`` members labelled by their width parameter (widest first).

    Widths span ``decades`` decades downward from ``L/8``. Random members keep
    wavenumbers ``|k| <= n/16`` so that their powers stay resolved, and are
    shifted to a floor of 5% of their range when ``nonneg`` is set.
    """
    if name not in FAMILIES:
        raise InequalityError(f"unknown family {name!r}; choose from {FAMILIES}")
    if samples < 1:
        raise InequalityError("samples must be positive")
    w_max = grid.side / 8
    widths = w_max * 10.0 ** (-np.linspace(0, decades, samples))
    rng = np.random.default_rng(seed)
    out = []
    if name == "gaussians":
        out = [(float(w), gaussian_bump(grid, w)) for w in widths]
    elif name == "blocks":
        out = [(float(w), mollified_block(grid, w, max(w / 4, grid.h))) for w in widths]
    elif name == "two-bumps":
        w = max(grid.side / 64, 2 * grid.h)
        seps = np.linspace(4 * w, grid.side / 3, samples)
        for s in seps:
            c = np.zeros(grid.dim)
            c[0] = s / 2
            out.append((float(s), gaussian_bump(grid, w, c) + gaussian_bump(grid, w, -c)))
    else:
        kmax = np.unique(np.geomspace(1, max(grid.n // 16, 1), samples).astype(int))
        for i in range(samples):
            f = random_band_limited(grid, int(kmax[i % kmax.size]), rng)
            if nonneg:
                f = nonneg_floor(f)
            out.append((float(grid.side / kmax[i % kmax.size]), f))
    return out


def growth_trend(widths, values, factor: float = 2.0, halvings: int = 3,
                 min_width: float = 0.0) -> dict:
    """Flag ``unbounded_trend`` when the quotient grows by at least ``factor`` per
    halving of the width over ``halvings`` consecutive halvings.

    Only widths ``>= min_width`` count (below the grid spacing every bump is a
    single cell). Values are interpolated in ``log`` width; the per-halving
    ratios of the finest counted halvings are reported alongside the flag.
    """
    w = np.asarray(widths, float)
    v = np.asarray(values, float)
    keep = w >= min_width
    w, v = w[keep], v[keep]
    if w.size < 2:
        raise InequalityError("fewer than two widths above min_width")
    order = np.argsort(w)[::-1]
    w, v = w[order], v[order]
    lw = np.log2(w)
    span = lw[0] - lw[-1]
    if span < halvings:
        raise InequalityError(f"widths cover {span:.2f} halvings; need {halvings}")
    marks = lw[-1] + np.arange(halvings, -1, -1.0)
    lv = np.interp(marks, lw[::-1], np.log2(v)[::-1])
    ratios = 2.0 ** np.diff(lv)
    exponent = -np.polyfit(lw, np.log2(v), 1)[0]
    return {"unbounded_trend": bool(np.all(ratios >= factor)), "ratios": ratios.tolist(),
            "factor": factor, "growth_exponent": float(exponent)}


@dataclasses.dataclass
class QuotientReport:
    inequality: str
    family: str
    params: dict
    widths: list[float]
    quotients: list[float]
    sup_quotient: float
    violation_count: int = 0
    trend: dict | None = None

    def to_rows(self) -> list[dict]:
        return [{"inequality": self.inequality, "family": self.family, "width": w, "quotient": q}
                for w, q in zip(self.widths, self.quotients)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def quotient_scan(spec: OperatorSpec, grid: Grid, inequality: str, family_name: str = "gaussians",
                  samples: int = 50, seed: int = 0, alpha: float | None = None, p_tilde: float = 1.5,
                  q_tilde: float = 0.5, m: float = 2.0, sv_p: float = 2.0,
                  trend_factor: float = 2.0) -> QuotientReport:
    """Evaluate one inequality over a function family."""
    alpha = alpha if alpha is not None else spec.alpha_effective
    N = grid.dim
    members = family(grid, family_name, samples, seed)
    params: dict = {"samples": samples, "seed": seed}
    vals, widths, violations = [], [], 0
    for w, f in members:
        if inequality == "nash":
            q = nash_quotient(spec, f, alpha, N)
        elif inequality == "sobolev":
            q = sobolev_quotient(spec, f, alpha, N)
        elif inequality == "gns":
            q = gns_quotient(spec, f, p_tilde, q_tilde, two_star(alpha, N), m)
        elif inequality == "poincare":
            q = gns_quotient(spec, f, p_tilde, q_tilde, 2.0, m)
        elif inequality == "sv":
            r = stroock_varopoulos_check(spec, f.nonneg(), sv_p, m)
            q = r["slack"] / max(abs(r["lhs"]), 1e-300)
            violations += q < -1e-8
        else:
            raise InequalityError(f"unknown inequality {inequality!r}")
        vals.append(float(q))
        widths.append(w)
    if inequality in ("nash", "sobolev", "gns"):
        params["alpha"] = alpha
    if inequality in ("gns", "poincare"):
        params.update(p_tilde=p_tilde, q_tilde=q_tilde, m=m)
    if inequality == "sv":
        params.update(p=sv_p, m=m)
    trend = None
    if family_name in ("gaussians", "blocks") and inequality != "sv":
        try:
            trend = growth_trend(widths, vals, trend_factor, min_width=grid.h)
        except InequalityError:
            trend = None
    sup = float(np.max(vals)) if inequality != "sv" else float(np.min(vals))
    return QuotientReport(inequality, family_name, params, widths, vals, sup, int(violations), trend)


# ------------------------------------------------------------------ energy identities along trajectories

def energy_residuals(traj) -> np.ndarray:
    """Per-step residual of ``d/dt int u^{m+1} = -(m+1) Q[u^m]`` relative to the dissipation scale.

    Needs every step stored (``snapshots="all"``).
    """
    m = traj.m
    steps = traj.tgrid.steps
    fields = traj.fields
    if len(fields) != len(steps) + 1:
        raise InequalityError("energy residuals need a trajectory with every step stored")
    out = []
    for j, dt in enumerate(steps, start=1):
        e1 = power(fields[j], m + 1).integral()
        e0 = power(fields[j - 1], m + 1).integral()
        diss = (m + 1) * quadratic_form(traj.spec, power(fields[j], m))
        out.append(abs((e1 - e0) / dt + diss) / max(diss, 1e-300))
    return np.array(out)


def dirichlet_energies(traj) -> np.ndarray:
    """``Q[u(t)^m]`` at every stored snapshot."""
    return np.array([quadratic_form(traj.spec, power(u, traj.m)) for u in traj.fields])


def check_energy(traj, rel_tol: float = 1e-8):
    """``Q[u(t)^m]`` nonincreasing across snapshots (relative tolerance ``rel_tol``);
    the energy-identity residual is reported when every step is stored."""
    from .estimates import EstimateReport

    E = dirichlet_energies(traj)
    rows = []
    for j in range(1, len(E)):
        scale = max(E[j - 1], 1e-300)
        rows.append({"t": float(traj.times[j]), "energy": float(E[j]),
                     "margin": float((E[j - 1] * (1 + rel_tol) - E[j]) / scale)})
    notes: dict = {"rel_tol": rel_tol}
    if traj.tgrid is not None and len(traj.fields) == len(traj.tgrid.steps) + 1:
        notes["identity_residual_max"] = float(energy_residuals(traj).max())
    if not rows:
        return EstimateReport("energy", math.nan, {}, False, 0.0, rows, notes, "Dirichlet energy nonincreasing")
    i = int(np.argmin([r["margin"] for r in rows]))
    worst = rows[i]["margin"]
    return EstimateReport("energy", worst, rows[i], worst >= 0, 0.0, rows, notes,
                          "Dirichlet energy nonincreasing")
