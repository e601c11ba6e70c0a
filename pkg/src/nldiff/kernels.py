"""Heat kernels, Green functions and the structural assumptions on them.

All kernels are centered at the origin. Green functions of mass-conserving
operators are the zero-mean periodic ones (zero mode dropped), so they are
only compared with free-space asymptotics on the window ``[4h, L/8]``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .grid import Field, Grid, idft_multiplier, lp_norm
from .operators import Convolution0Order, Identity, OperatorSpec, symbol_grid

UNDER_RESOLVED_LEVEL = 1e-8
STABILITY_FACTOR = 3.0
QUADRATURE_TOL = 0.02
NODES_PER_DECADE = 64
REFINE_GROWTH_TOL = 0.1
NEGATIVE_MASS_TOL = 1e-2
REFINE_CONTRACTION = 0.8


class KernelError(ValueError):
    pass


@dataclasses.dataclass(frozen=True, eq=False)
class KernelReport:
    spec: OperatorSpec
    grid: Grid
    kernel: Field
    kind: str  # "heat", "green", "resolvent"
    t: float | None = None
    route: str = "symbol"  # or "quadrature"
    fitted: dict = dataclasses.field(default_factory=dict)
    classification: tuple[str, ...] = ()
    window: tuple[float, float] | None = None
    flags: dict = dataclasses.field(default_factory=dict)

    def with_fit(self, fitted: dict, classification, window) -> "KernelReport":
        return dataclasses.replace(
            self, fitted=dict(fitted), classification=tuple(classification), window=window
        )

    @property
    def mass(self) -> float:
        return self.kernel.integral()

    def to_dict(self) -> dict:
        return {
            "operator": self.spec.to_dict(),
            "grid": self.grid.to_dict(),
            "kind": self.kind,
            "t": self.t,
            "route": self.route,
            "mass": self.mass,
            "kernel_max": float(self.kernel.values.max()),
            "kernel_min": float(self.kernel.values.min()),
            "fitted": _jsonable(self.fitted),
            "classification": list(self.classification),
            "window": list(self.window) if self.window else None,
            "flags": _jsonable(self.flags),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def default_window(grid: Grid) -> tuple[float, float]:
    return 4 * grid.h, grid.side / 8


def _nyquist_mask(grid: Grid) -> np.ndarray:
    idx = np.fft.fftfreq(grid.n, d=1.0 / grid.n).astype(int)
    edge = np.abs(idx) == grid.n // 2
    mask = np.zeros(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        shp = [1] * grid.dim
        shp[ax] = grid.n
        mask |= np.broadcast_to(edge.reshape(shp), grid.shape)
    return mask


# ------------------------------------------------------------------ kernels

def heat_kernel(spec: OperatorSpec, grid: Grid, t: float) -> KernelReport:
    """``H(., t)`` as the inverse transform of ``exp(-t sigma)``."""
    if not t > 0:
        raise KernelError(f"t must be positive, got {t}")
    s = symbol_grid(spec, grid)
    mult = np.exp(-t * s)
    nyq = float(mult[_nyquist_mask(grid)].max())
    flags = {"under_resolved": nyq > UNDER_RESOLVED_LEVEL, "nyquist_level": nyq}
    return KernelReport(spec, grid, idft_multiplier(grid, mult), "heat", t=float(t), flags=flags)


def green_resolvent(spec: OperatorSpec, grid: Grid) -> KernelReport:
    """Kernel of ``(I - L)^{-1}``, symbol ``1/(1 + sigma)``."""
    s = symbol_grid(spec, grid)
    return KernelReport(spec, grid, idft_multiplier(grid, 1.0 / (1.0 + s)), "resolvent",
                        window=default_window(grid))


def green_function(spec: OperatorSpec, grid: Grid) -> KernelReport:
    """Kernel of ``(-L)^{-1}``; zero-mean periodic version when ``sigma(0) = 0``."""
    if isinstance(spec, Identity):
        raise KernelError("the Identity Green function is a delta; handle it analytically")
    s = symbol_grid(spec, grid)
    zero_mode = s.flat[0] == 0.0
    inv = np.zeros(grid.shape)
    nonzero = np.ones(grid.shape, dtype=bool)
    if zero_mode:
        nonzero.flat[0] = False
    if np.any(s[nonzero] <= 0):
        raise KernelError("symbol vanishes at a nonzero grid frequency")
    inv[nonzero] = 1.0 / s[nonzero]
    flags = {"periodic_correction": bool(zero_mode)}
    return KernelReport(spec, grid, idft_multiplier(grid, inv), "green",
                        window=default_window(grid), flags=flags)


def log_time_nodes(grid: Grid, alpha: float, t_max: float = 1e2,
                   per_decade: int = NODES_PER_DECADE) -> np.ndarray:
    t_min = 1e-4 * grid.h**alpha
    decades = math.log10(t_max / t_min)
    return np.geomspace(t_min, t_max, max(int(math.ceil(decades * per_decade)) + 1, 2))


def _log_trapezoid_weights(t: np.ndarray) -> np.ndarray:
    # int f dt = int f(t) t dlog(t); trapezoid on log-spaced nodes
    s = np.log(t)
    ds = np.diff(s)
    w = np.zeros_like(t)
    w[:-1] += 0.5 * ds
    w[1:] += 0.5 * ds
    return w * t


def green_time_quadrature(spec: OperatorSpec, grid: Grid, t_grid: np.ndarray | None = None,
                          discount: bool = False) -> KernelReport:
    """``int_0^inf w(t) H(., t) dt`` by log-time trapezoid, ``w = 1`` or ``exp(-t)``.

    The head ``[0, t_min]`` is integrated exactly per mode. With ``discount``
    the result approximates the resolvent Green function; otherwise the plain
    one (zero mode dropped) with the tail beyond ``t_max`` flagged.
    """
    alpha = spec.alpha_effective or 2.0
    t = np.asarray(t_grid if t_grid is not None else log_time_nodes(grid, alpha), dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) <= 0) or t[0] <= 0:
        raise KernelError("t_grid must be increasing positive times")
    if math.log10(t[-1] / t[0]) < 4:
        raise KernelError("t_grid must span at least 4 decades")
    s = symbol_grid(spec, grid)
    shift = 1.0 if discount else 0.0
    uniq, inverse = np.unique(s, return_inverse=True)
    rate = uniq + shift
    w = _log_trapezoid_weights(t)
    mult_u = np.exp(-np.outer(rate, t)) @ w
    t0 = t[0]
    head = np.where(rate > 0, -np.expm1(-t0 * rate) / np.where(rate > 0, rate, 1.0), t0)
    mult_u = mult_u + head
    mult = mult_u[inverse.reshape(s.shape)]
    flags = {"t_min": float(t0), "t_max": float(t[-1]), "nodes": int(t.size)}
    if not discount:
        if s.flat[0] == 0.0:
            mult.flat[0] = 0.0
            flags["periodic_correction"] = True
        positive = uniq[uniq > 0]
        flags["tail_level"] = float(np.exp(-t[-1] * positive.min())) if positive.size else 0.0
        flags["tail_truncated"] = flags["tail_level"] > 1e-3
    report = KernelReport(spec, grid, idft_multiplier(grid, mult), "resolvent" if discount else "green",
                          route="quadrature", window=default_window(grid), flags=flags)
    ref = green_resolvent(spec, grid) if discount else green_function(spec, grid)
    dev = window_deviation(report.kernel, ref.kernel)
    flags["symbol_route_deviation"] = dev
    flags["symbol_route_mismatch"] = dev > QUADRATURE_TOL
    return report


def negative_mass_fraction(u: Field) -> float:
    v = u.values
    total = np.abs(v).sum()
    return float(-v[v < 0].sum() / total) if total > 0 else 0.0


def window_deviation(a: Field, b: Field, window: tuple[float, float] | None = None) -> float:
    """Max relative difference of radial profiles on the window."""
    r_a, p_a = radial_profile(a)
    _, p_b = radial_profile(b)
    lo, hi = window or default_window(a.grid)
    sel = (r_a >= lo) & (r_a <= hi)
    return float(np.max(np.abs(p_a[sel] - p_b[sel]) / np.maximum(np.abs(p_b[sel]), 1e-300)))


# ------------------------------------------------------------------ profiles and fits

def radial_profile(u: Field) -> tuple[np.ndarray, np.ndarray]:
    """Shell means with shells of width ``h``; returns (shell radius, mean)."""
    g = u.grid
    k = np.rint(g.radius / g.h).astype(np.int64).ravel()
    counts = np.bincount(k)
    sums = np.bincount(k, weights=u.values.ravel())
    keep = counts > 0
    radii = np.arange(counts.size)[keep] * g.h
    return radii, sums[keep] / counts[keep]


def fit_power_law(r: np.ndarray, v: np.ndarray, window: tuple[float, float]) -> dict:
    """Least-squares slope of ``log v`` against ``log r`` on the window."""
    sel = (r >= window[0]) & (r <= window[1]) & (v > 0)
    if sel.sum() < 3:
        raise KernelError(f"fewer than 3 positive samples in window {window}")
    x, y = np.log(r[sel]), np.log(v[sel])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    return {"slope": float(slope), "intercept": float(icpt),
            "r_squared": float(1 - np.sum(resid**2) / ss) if ss > 0 else 1.0, "points": int(sel.sum())}


def radial_exponent(report: KernelReport, window: tuple[float, float] | None = None) -> dict:
    r, prof = radial_profile(report.kernel)
    return fit_power_law(r, prof, window or report.window or default_window(report.grid))


def ball_integrals(u: Field, radii: np.ndarray) -> np.ndarray:
    """``int_{B_R} u`` for each R."""
    g = u.grid
    r = g.radius.ravel()
    order = np.argsort(r, kind="stable")
    cum = np.cumsum(u.values.ravel()[order]) * g.cell_volume
    idx = np.searchsorted(r[order], radii, side="right")
    return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)


def sup_outside(u: Field, radii: np.ndarray) -> np.ndarray:
    """Max over ``R < |x| <= (L/2)(1 - 2h/L)`` for each R."""
    g = u.grid
    r = g.radius.ravel()
    rcap = g.side / 2 * (1 - 2 * g.h / g.side)
    inside = r <= rcap
    rr, vv = r[inside], u.values.ravel()[inside]
    order = np.argsort(rr, kind="stable")[::-1]
    run = np.maximum.accumulate(vv[order])
    rs = rr[order]
    out = np.empty(len(radii))
    for i, R in enumerate(radii):
        j = np.searchsorted(-rs, -R, side="left")  # count of points with r > R
        out[i] = run[j - 1] if j > 0 else -np.inf
    return out


def structural_constants(report: KernelReport, alpha: float, n_radii: int = 12,
                         window: tuple[float, float] | None = None) -> dict:
    g = report.grid
    lo, hi = window or report.window or default_window(g)
    radii = np.geomspace(lo, hi, n_radii)
    N = g.dim
    k1 = ball_integrals(report.kernel, radii) / radii**alpha
    k2 = radii ** (N - alpha) * sup_outside(report.kernel, radii)
    return {"radii": radii, "K1_R": k1, "K2_R": k2}


def _ratio(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        return math.inf
    return float(v.max() / v.min())


def _refinement_stable(values: list[float]) -> tuple[bool, list[float]]:
    """Values on grids n/4, n/2, n: converging when the last growth is small
    or the successive increments contract."""
    g = [values[i + 1] / values[i] for i in range(len(values) - 1)]
    if len(g) < 2:
        return abs(g[-1] - 1) < REFINE_GROWTH_TOL, g
    small = abs(g[-1] - 1) < REFINE_GROWTH_TOL
    contracting = abs(g[-1] - 1) < REFINE_CONTRACTION * abs(g[-2] - 1)
    return small or contracting, g


def classify_assumptions(report: KernelReport, alpha: float | None = None,
                         p_values=(1.2,), refine: bool = True) -> KernelReport:
    """Fit K1, K2, K3, C1, C_p and list the assumptions that look finite and stable.

    K1 = max_R int_{B_R} G / R^alpha and K2 = max_R R^{N-alpha} sup_{|x|>R} G over
    the fit window; each is kept when its R-profile varies by less than a factor 3.
    A single grid cannot see a logarithmic blow-up at the origin, so with
    ``refine`` the same quantities are recomputed on grids with n/2 and n/4
    points: K1 at R = 4h and each resolvent norm C_p must converge (last growth
    below 10% or contracting increments). G1' is listed only when G1 fails
    through the tail, G2 only without a periodic correction, and G3 (per p)
    only for mass-conserving operators, since otherwise G2 already applies.
    """
    if report.kind not in ("green", "resolvent"):
        raise KernelError("classification needs a Green or resolvent Green report")
    spec, g = report.spec, report.grid
    alpha = alpha if alpha is not None else spec.alpha_effective
    lo, hi = report.window or default_window(g)
    if alpha is None or not lo < hi:
        return report.with_fit({"reason": "window empty or no local order"}, ("inconclusive",), (lo, hi))
    levels = [g]
    if refine:
        if g.n < 32:
            return report.with_fit({"reason": "grid too coarse to refine"}, ("inconclusive",), (lo, hi))
        levels = [Grid(g.dim, g.n // 4, g.side), Grid(g.dim, g.n // 2, g.side), g]

    fitted: dict = {"alpha": alpha}
    classes: list[str] = []
    plain = report if report.kind == "green" else green_function(spec, g)
    sc = structural_constants(plain, alpha, window=(lo, hi))
    fitted.update(
        K1=float(sc["K1_R"].max()), K2=float(sc["K2_R"].max()),
        K1_ratio=_ratio(sc["K1_R"]), K2_ratio=_ratio(sc["K2_R"]),
        K1_profile=sc["K1_R"].tolist(), K2_profile=sc["K2_R"].tolist(), radii=sc["radii"].tolist(),
    )
    try:
        fitted["alpha_fit"] = g.dim + radial_exponent(plain, (lo, hi))["slope"]
    except KernelError:
        fitted["alpha_fit"] = None
    k1_ok = fitted["K1_ratio"] < STABILITY_FACTOR
    if refine:
        k1_small = []
        for lev in levels:
            kern = plain.kernel if lev == g else green_function(spec, lev).kernel
            R = np.array([4 * lev.h])
            k1_small.append(float(ball_integrals(kern, R)[0] / R[0] ** alpha))
        ok, growth = _refinement_stable(k1_small) if min(k1_small) > 0 else (False, [])
        fitted["K1_small_R_refinement"] = k1_small
        fitted["K1_refinement_growth"] = growth
        k1_ok = k1_ok and ok
    k2_ok = fitted["K2_ratio"] < STABILITY_FACTOR
    if k1_ok and k2_ok:
        classes.append("G1")
    # K3: the constant floor beyond the window; the crossover is our own fit
    k3 = float(max(sup_outside(plain.kernel, np.array([hi]))[0], 0.0))
    fitted["K3"] = k3
    if g.dim > alpha and k3 > 0:
        fitted["crossover_radius"] = float((fitted["K2"] / k3) ** (1.0 / (g.dim - alpha)))
    near = sc["K2_R"][: max(len(sc["K2_R"]) // 2, 2)]
    if k1_ok and not k2_ok and _ratio(near) < STABILITY_FACTOR:
        classes.append("G1prime")

    fitted["periodic_correction"] = bool(plain.flags.get("periodic_correction", False))
    if not fitted["periodic_correction"]:
        c1 = lp_norm(plain.kernel, 1)
        fitted["C1"] = c1
        # truncating a slowly decaying multiplier leaves Gibbs ripples, so test negative mass
        neg = negative_mass_fraction(plain.kernel)
        fitted["negative_mass_fraction"] = neg
        if math.isfinite(c1) and neg < NEGATIVE_MASS_TOL:
            classes.append("G2")

    if spec.conserves_mass:
        res = report if report.kind == "resolvent" else green_resolvent(spec, g)
        fitted["resolvent_C1"] = lp_norm(res.kernel, 1)
        cp, stable_p, growth_p = {}, {}, {}
        coarse = [green_resolvent(spec, lev).kernel for lev in levels[:-1]]
        for p in map(float, p_values):
            cp[p] = lp_norm(res.kernel, p)
            if refine:
                ok, growth = _refinement_stable([lp_norm(k, p) for k in coarse] + [cp[p]])
                stable_p[p], growth_p[p] = ok and math.isfinite(cp[p]), growth
            else:
                stable_p[p] = math.isfinite(cp[p])
        fitted["C_p"] = cp
        fitted["C_p_stable"] = stable_p
        if refine:
            fitted["C_p_refinement_growth"] = growth_p
        if any(stable_p.values()):
            classes.append("G3")
    if not classes:
        classes.append("none")
    return report.with_fit(fitted, classes, (lo, hi))


def refinement_trend(spec: OperatorSpec, dim: int, side: float, ns, p_values=(1.2, 2.0),
                     alpha: float | None = None) -> dict:
    """Resolvent L^p norms and the G1 ball ratio across a refinement sequence."""
    alpha = alpha if alpha is not None else spec.alpha_effective
    rows = []
    for n in ns:
        g = Grid(dim, n, side)
        res = green_resolvent(spec, g).kernel
        row = {"n": n, "h": g.h, "L1": lp_norm(res, 1)}
        row.update({f"L{p:g}": lp_norm(res, p) for p in p_values})
        # K1 at the finest resolved radius 4h versus the window edge
        R = np.array([4 * g.h, side / 8])
        plain = green_function(spec, g).kernel
        k1 = ball_integrals(plain, R) / R**alpha
        row["K1_small_R"] = float(k1[0])
        row["K1_ratio"] = float(k1[0] / k1[1]) if k1[1] > 0 else math.inf
        rows.append(row)
    growth = {}
    for p in p_values:
        key = f"L{p:g}"
        growth[key] = [rows[i + 1][key] / rows[i][key] for i in range(len(rows) - 1)]
    growth["K1_small_R"] = [rows[i + 1]["K1_small_R"] / rows[i]["K1_small_R"] for i in range(len(rows) - 1)]
    return {"rows": rows, "growth": growth}


def two_regime_exponents(spec: OperatorSpec, dim: int = 3, n: int = 128,
                         near_side: float = 4.0, far_side: float = 64.0) -> dict:
    """Local and far-field radial exponents from a fine and a coarse grid."""
    near = green_function(spec, Grid(dim, n, near_side))
    far = green_function(spec, Grid(dim, n, far_side))
    return {"near": radial_exponent(near), "far": radial_exponent(far),
            "near_window": near.window, "far_window": far.window}


def consistency_residual(report: KernelReport) -> float:
    """``max |(I - L) G - delta| / max delta`` for a resolvent Green function."""
    from .operators import apply

    g = report.grid
    delta = Field.delta(g)
    lhs = report.kernel + apply(report.spec, report.kernel)
    return float(np.abs((lhs - delta).values).max() / delta.values.max())


# ------------------------------------------------------------------ linear to nonlinear

def linear_implies_nonlinear_integral(c_of_t, p: float, t_grid: np.ndarray | None = None,
                                      fit_points: int = 8) -> dict:
    """``int_0^inf exp(-t) C(t)^{(p-1)/p} dt`` from a tabulated on-diagonal bound.

    ``c_of_t`` is a callable or a pair ``(t, C)``. Beyond the table the bound is
    extended by a power law ``t^s`` at the small end and by ``exp(b t)`` at the
    large end, both fitted from the outermost ``fit_points`` samples; the
    integral is reported infinite when either extension diverges.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if callable(c_of_t):
        t = np.geomspace(1e-8, 60.0, 2049) if t_grid is None else np.asarray(t_grid, float)
        c = np.array([float(c_of_t(x)) for x in t])
    else:
        t, c = (np.asarray(a, dtype=float) for a in c_of_t)
    if np.any(c <= 0):
        raise ValueError("the tabulated bound must be positive")
    q = (p - 1) / p
    k = min(fit_points, len(t) // 2)
    s_head = float(np.polyfit(np.log(t[:k]), np.log(c[:k]), 1)[0])
    b_tail = float(np.polyfit(t[-k:], np.log(c[-k:]), 1)[0])
    head_exp = q * s_head
    result = {"head_exponent": head_exp, "tail_rate": q * b_tail - 1.0}
    if head_exp <= -1 or q * b_tail >= 1:
        return {**result, "finite": False, "value": math.inf}
    f = np.exp(-t) * c**q
    body = float(np.sum(_log_trapezoid_weights(t) * f))
    head = c[0] ** q * t[0] / (head_exp + 1)
    tail = f[-1] / (1 - q * b_tail)
    return {**result, "finite": True, "value": body + head + tail}


# ------------------------------------------------------------------ cache

def _cache_key(spec: OperatorSpec, grid: Grid, kind: str, t: float | None) -> str:
    payload = json.dumps({"op": spec.to_dict(), "grid": grid.to_dict(), "kind": kind, "t": t},
                         sort_keys=True).encode()
    h = hashlib.sha256(payload)
    if isinstance(spec, Convolution0Order):
        h.update(spec.kernel.values.tobytes())
    return h.hexdigest()[:32]


def compute_kernel(spec: OperatorSpec, grid: Grid, kind: str, t: float | None = None) -> KernelReport:
    """Dispatch with an optional on-disk cache in ``$NLDIFF_CACHE_DIR``."""
    builders = {
        "heat": lambda: heat_kernel(spec, grid, t),
        "green": lambda: green_function(spec, grid),
        "resolvent": lambda: green_resolvent(spec, grid),
        "quadrature": lambda: green_time_quadrature(spec, grid, discount=False),
        "quadrature-resolvent": lambda: green_time_quadrature(spec, grid, discount=True),
    }
    if kind not in builders:
        raise KernelError(f"unknown kernel kind {kind!r}")
    cache_dir = os.environ.get("NLDIFF_CACHE_DIR")
    if not cache_dir or kind.startswith("quadrature"):
        return builders[kind]()
    path = Path(cache_dir) / f"kernel-{_cache_key(spec, grid, kind, t)}.npz"
    if path.exists():
        with np.load(path, allow_pickle=False) as z:
            flags = json.loads(str(z["flags"]))
            base = "heat" if kind == "heat" else kind
            return KernelReport(spec, grid, Field(grid, z["values"]), base, t=t,
                                window=None if kind == "heat" else default_window(grid), flags=flags)
    rep = builders[kind]()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, values=rep.kernel.values, flags=json.dumps(_jsonable(rep.flags)))
    os.replace(tmp, path)
    return rep
