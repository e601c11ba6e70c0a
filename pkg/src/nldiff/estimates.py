"""Explicit smoothing estimates and structural properties checked along trajectories.

Every check returns an :class:`EstimateReport`. Margins are ``(RHS - LHS)``
divided by ``max(|RHS|, |LHS|)`` so they live in ``[-1, 1]`` (up to sign
conventions) and a check passes when ``margin_min >= -slack``.

Snapshots are only used when resolved (at least 8 cells with ``u >= 0.01 max``)
and not boundary-contaminated: the fraction of mass outside the central half
may exceed that of the initial datum by at most ``contamination_tol``.
Heavy-tailed kernels reach the boundary at once, hence the loose default.
Skipped snapshots are counted in ``notes``.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .evolution import Trajectory
from .grid import Field, convolve, lp_norm, mass_outside_central_half
from .kernels import KernelReport

DEFAULT_SLACK = 1e-6
RESOLVED_CELLS = 8
RESOLVED_LEVEL = 0.01
DEFAULT_CONTAMINATION = 0.1


class EstimateError(ValueError):
    pass


@dataclasses.dataclass
class EstimateReport:
    kind: str
    margin_min: float
    worst_point: dict
    passed: bool
    slack_used: float
    data_table: list[dict] = dataclasses.field(default_factory=list)
    notes: dict = dataclasses.field(default_factory=dict)
    reference: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "margin_min": self.margin_min, "worst_point": self.worst_point,
            "passed": self.passed, "slack_used": self.slack_used, "notes": self.notes,
            "reference": self.reference, "rows": len(self.data_table),
        }


def _margin(rhs, lhs):
    rhs, lhs = np.asarray(rhs, float), np.asarray(lhs, float)
    scale = np.maximum(np.abs(rhs), np.abs(lhs))
    return np.where(scale > 0, (rhs - lhs) / np.where(scale > 0, scale, 1.0), 0.0)


def _finish(kind, rows, slack, notes, reference, key="margin") -> EstimateReport:
    if not rows:
        notes = {**notes, "empty": "no eligible points"}
        return EstimateReport(kind, math.nan, {}, False, slack, rows, notes, reference)
    i = int(np.argmin([r[key] for r in rows]))
    worst = rows[i][key]
    return EstimateReport(kind, float(worst), dict(rows[i]), bool(worst >= -slack), slack, rows, notes,
                          reference)


# ------------------------------------------------------------------ constants

def theta(m: float, alpha: float, N: int, p: float = 1.0) -> float:
    """``1 / (alpha p + N (m - 1))``; ``p = 1`` gives theta_alpha."""
    return 1.0 / (alpha * p + N * (m - 1))


def c_fundamental(m: float) -> float:
    """``2^{m/(m-1)}``."""
    return 2.0 ** (m / (m - 1))


def c_fundamental_resolvent(m: float) -> float:
    """``2 (1 + m)^{m/(m-1)}``."""
    return 2.0 * (1 + m) ** (m / (m - 1))


def c_smoothing_g1(m: float, alpha: float, N: int, K1: float, K2: float) -> float:
    th = theta(m, alpha, N)
    return (2 ** (1 / m) * c_fundamental(m) ** (N * th) * (m / (m - 1)) ** (alpha * th)
            * K1 ** ((N - alpha) * th) * K2 ** (alpha * th))


def c_tilde_g1prime(m: float, K3: float) -> float:
    return (2 * m / (m - 1) * c_fundamental(m) * K3) ** (1 / m)


def t0_g1prime(m: float, alpha: float, K1: float, K2: float, K3: float, mass: float) -> float:
    a = alpha * m / (m - 1)
    return (2**m * (m / (m - 1)) ** (-(m - 1)) * c_fundamental(m) * K1**m * K2**a
            * K3 ** (-(a + (m - 1))) * mass ** (-(m - 1)))


def c_tilde_combined(m: float, K1: float, K2: float) -> float:
    c = c_fundamental(m)
    return 2 * ((c * K1) ** (m / (m - 1)) + m / (m - 1) * c * K2) ** (1 / m)


def g3_constants(m: float, p: float, Cp: float, mass: float) -> dict:
    c = c_fundamental_resolvent(m)
    k = (c * Cp) ** (1 - 1 / p)
    return {"early": 2 * (m - 1) ** (-1 / (m - 1)), "late": 2 * k * mass,
            "t0": (1 / (m - 1)) * k ** (-(m - 1)) * mass ** (-(m - 1))}


def c_tilde_absolute(m: float, C1: float) -> float:
    return (c_fundamental(m) * C1) ** (1 / (m - 1))


def zero_order_constants(m: float, p: float, CJp: float, mass: float) -> dict:
    q = p / (p - 1) if math.isfinite(p) else 1.0
    c = c_fundamental(m)
    return {
        "q": q,
        "early": 2 * (m * q * c ** (m / (m - 1))) ** (1 / m),
        "late": 2 * (m * c / (m - 1) * CJp) ** q * mass,
        "t0": ((m * q) ** ((m - 1) / m) * (m / (m - 1) * CJp) ** (-q * (m - 1))
               * c ** (1 - q * (m - 1)) * mass ** (-(m - 1))),
    }


@dataclasses.dataclass(frozen=True)
class EstimateParams:
    """Inputs to the smoothing bounds; structural constants come from kernel fits."""

    m: float
    N: int
    norm_u0_L1: float
    alpha: float | None = None
    K1: float | None = None
    K2: float | None = None
    K3: float | None = None
    C1: float | None = None
    p: float | None = None
    Cp: float | None = None
    CJp: float | None = None

    @property
    def theta_alpha(self) -> float:
        return theta(self.m, self._need("alpha", "a local order alpha"), self.N)

    def theta_p(self, p: float) -> float:
        return theta(self.m, self._need("alpha", "a local order alpha"), self.N, p)

    def _need(self, name: str, what: str):
        v = getattr(self, name)
        if v is None:
            raise EstimateError(f"missing {name} ({what})")
        return v

    @classmethod
    def from_kernel(cls, report: KernelReport, m: float, norm_u0_L1: float, p: float | None = None,
                    **overrides) -> "EstimateParams":
        f = report.fitted
        cp = None
        if p is not None and "C_p" in f:
            cp = f["C_p"].get(float(p))
        vals = dict(m=m, N=report.grid.dim, norm_u0_L1=norm_u0_L1, alpha=f.get("alpha"),
                    K1=f.get("K1"), K2=f.get("K2"), K3=f.get("K3"), C1=f.get("C1"), p=p, Cp=cp)
        vals.update(overrides)
        return cls(**vals)


VARIANTS = ("G1", "G1prime", "combined", "G3", "absolute", "zero_order")

REFERENCES = {
    "G1": "L1-Linf smoothing under local integrability with power tail",
    "G1prime": "L1-Linf smoothing, power-or-constant tail, two regimes",
    "combined": "L1-Linf smoothing with small-scale alpha and large-scale 2",
    "G3": "L1-Linf smoothing from the resolvent Green function in L^p",
    "absolute": "absolute bound from an integrable Green function",
    "zero_order": "L1-Linf smoothing for 0-order convolution operators",
    "fundamental": "fundamental pointwise upper bound via the Green function",
    "fundamental_resolvent": "fundamental pointwise upper bound via the resolvent Green function",
    "fundamental_zero_order": "fundamental pointwise upper bound for 0-order operators",
    "decay_fit": "empirical Linf decay exponent",
    "sup_retention": "no smoothing: Linf norm retained",
    "implications": "L^r-L^p smoothing derived from L1-Linf smoothing",
    "lp_decay": "L^p norms nonincreasing in time",
    "comparison": "ordered data stay ordered",
    "mass": "mass conservation or discrete mass balance",
    "time_monotonicity": "t^{1/(m-1)} u nondecreasing in time",
}


def smoothing_bound(variant: str, t: np.ndarray, P: EstimateParams) -> dict:
    """Right-hand side of the chosen L1-Linf bound at times ``t``.

    Two-regime variants return both branches, their pointwise minimum (the
    checked bound) and the branch the printed ``t0`` assigns.
    """
    t = np.asarray(t, dtype=float)
    m, N, M = P.m, P.N, P.norm_u0_L1
    if m <= 1:
        raise EstimateError("smoothing bounds need m > 1")
    if variant == "G1":
        a = P._need("alpha", "G1 needs the local order")
        th = theta(m, a, N)
        c = c_smoothing_g1(m, a, N, P._need("K1", "G1 classification"), P._need("K2", "G1 classification"))
        return {"bound": c * t ** (-N * th) * M ** (a * th), "exponent": N * th, "constant": c}
    if variant == "G1prime":
        a = P._need("alpha", "G1prime needs the local order")
        K1, K2 = P._need("K1", "G1prime classification"), P._need("K2", "G1prime classification")
        K3 = P._need("K3", "G1prime classification")
        th = theta(m, a, N)
        early = c_smoothing_g1(m, a, N, K1, K2) * t ** (-N * th) * M ** (a * th)
        late = c_tilde_g1prime(m, K3) * t ** (-1 / m) * M ** (1 / m)
        t0 = t0_g1prime(m, a, K1, K2, K3, M)
        return _two_regime(early, late, t, t0)
    if variant == "combined":
        a = P._need("alpha", "combined needs the small-scale order")
        c = c_tilde_combined(m, P._need("K1", "G1 classification"), P._need("K2", "G1 classification"))
        ta, t2 = theta(m, a, N), theta(m, 2.0, N)
        early = c * t ** (-N * ta) * M ** (a * ta)
        late = c * t ** (-N * t2) * M ** (2 * t2)
        return _two_regime(early, late, t, M ** (-(m - 1)))
    if variant == "G3":
        p = P._need("p", "G3 needs an exponent p")
        k = g3_constants(m, p, P._need("Cp", "G3 classification"), M)
        early = k["early"] * t ** (-1 / (m - 1))
        late = np.full_like(t, k["late"])
        return _two_regime(early, late, t, k["t0"])
    if variant == "absolute":
        c = c_tilde_absolute(m, P._need("C1", "G2 classification"))
        return {"bound": c * t ** (-1 / (m - 1)), "exponent": 1 / (m - 1), "constant": c}
    if variant == "zero_order":
        p = P.p if P.p is not None else math.inf
        k = zero_order_constants(m, p, P._need("CJp", "a kernel L^p norm C_{J,p}"), M)
        early = k["early"] * t ** (-1 / (m - 1))
        late = np.full_like(t, k["late"])
        return _two_regime(early, late, t, k["t0"])
    raise EstimateError(f"unknown smoothing variant {variant!r}")


def _two_regime(early, late, t, t0) -> dict:
    return {"bound": np.minimum(early, late), "early": early, "late": late, "t0": float(t0),
            "paper_branch": np.where(t <= t0, "early", "late"),
            "paper_bound": np.where(t <= t0, early, late)}


# ------------------------------------------------------------------ snapshot filtering

def is_resolved(u: Field) -> bool:
    mx = u.values.max()
    return mx > 0 and int((u.values >= RESOLVED_LEVEL * mx).sum()) >= RESOLVED_CELLS


def eligible_snapshots(traj: Trajectory, contamination_tol: float = DEFAULT_CONTAMINATION,
                       t_window: tuple[float, float] | None = None):
    """Positive-time snapshots that are resolved and uncontaminated, plus skip counts."""
    keep, skipped = [], {"unresolved": 0, "contaminated": 0, "outside_window": 0}
    base = mass_outside_central_half(traj.u0)
    for i, (t, u) in enumerate(traj.snapshots):
        if t <= 0:
            continue
        if t_window and not (t_window[0] <= t <= t_window[1]):
            skipped["outside_window"] += 1
        elif not is_resolved(u):
            skipped["unresolved"] += 1
        elif mass_outside_central_half(u) - base > contamination_tol:
            skipped["contaminated"] += 1
        else:
            keep.append((i, t, u))
    return keep, skipped


# ------------------------------------------------------------------ checks

def check_smoothing(traj: Trajectory, params: EstimateParams, variant: str,
                    slack: float = DEFAULT_SLACK, contamination_tol: float = DEFAULT_CONTAMINATION,
                    t_window: tuple[float, float] | None = None) -> EstimateReport:
    """``||u(t)||_inf`` against the chosen bound at every eligible snapshot."""
    if variant not in VARIANTS:
        raise EstimateError(f"unknown smoothing variant {variant!r}")
    snaps, skipped = eligible_snapshots(traj, contamination_tol, t_window)
    notes: dict = {"skipped": skipped, "contamination_tol": contamination_tol}
    if not snaps:
        return _finish(f"smoothing:{variant}", [], slack, notes, REFERENCES[variant])
    t = np.array([s[1] for s in snaps])
    linf = np.array([s[2].sup() for s in snaps])
    b = smoothing_bound(variant, t, params)
    marg = _margin(b["bound"], linf)
    rows = []
    for k, (i, ti, _) in enumerate(snaps):
        row = {"index": i, "t": float(ti), "linf": float(linf[k]), "bound": float(b["bound"][k]),
               "margin": float(marg[k])}
        if "early" in b:
            row.update(early=float(b["early"][k]), late=float(b["late"][k]),
                       paper_branch=str(b["paper_branch"][k]),
                       paper_margin=float(_margin(b["paper_bound"][k], linf[k])))
        rows.append(row)
    if "t0" in b:
        notes["t0"] = b["t0"]
    if "exponent" in b:
        notes["exponent"] = b["exponent"]
        notes["constant"] = b["constant"]
        notes["empirical_prefactor"] = float(np.max(linf * t ** b["exponent"]))
    return _finish(f"smoothing:{variant}", rows, slack, notes, REFERENCES[variant])


def _sample_pairs(snaps, n_samples: int, seed: int):
    """Spread samples over snapshots; points drawn from the resolved bulk (always
    including the maximum)."""
    rng = np.random.default_rng(seed)
    chosen = []
    per = max(1, math.ceil(n_samples / len(snaps)))
    for i, t, u in snaps:
        v = u.values.ravel()
        bulk = np.flatnonzero(v >= RESOLVED_LEVEL * v.max())
        pts = [int(np.argmax(v))]
        extra = rng.choice(bulk, size=min(per - 1, bulk.size), replace=False) if per > 1 else []
        pts.extend(int(x) for x in extra)
        chosen.extend((i, t, u, p) for p in pts)
    if len(chosen) > n_samples:
        idx = np.sort(rng.choice(len(chosen), size=n_samples, replace=False))
        chosen = [chosen[j] for j in idx]
    return chosen


def check_fundamental_bound(traj: Trajectory, kernel: KernelReport | None, variant: str = "plain",
                            n_samples: int = 32, seed: int = 0, slack: float = DEFAULT_SLACK,
                            contamination_tol: float = DEFAULT_CONTAMINATION,
                            t_window: tuple[float, float] | None = None) -> EstimateReport:
    """Pointwise ``u^m(x0, t) <= C(m)/t (u * G)(x0)`` at sampled bulk points.

    ``kernel=None`` means the Green function is a unit delta (Identity operator).
    With ``variant="resolvent"`` the bound is ``C(m) lam (u * G_{I-L})(x0)`` with
    ``lam = ||u(t)||_inf^{m-1}``, used only where ``lam > 1/((m-1)t)``.
    """
    m = traj.m
    if m < 1.2:
        raise EstimateError("fundamental-bound checks are restricted to m >= 1.2")
    if variant not in ("plain", "resolvent"):
        raise EstimateError(f"unknown fundamental-bound variant {variant!r}")
    snaps, skipped = eligible_snapshots(traj, contamination_tol, t_window)
    notes: dict = {"skipped": skipped, "contamination_tol": contamination_tol, "variant": variant}
    kind = "fundamental" if variant == "plain" else "fundamental_resolvent"
    if not snaps:
        return _finish(kind, [], slack, notes, REFERENCES[kind])
    rows = []
    cache: dict[int, np.ndarray] = {}
    for i, t, u, pt in _sample_pairs(snaps, n_samples, seed):
        if i not in cache:
            cache[i] = u.values.ravel() if kernel is None else convolve(u, kernel.kernel).values.ravel()
        conv = cache[i][pt]
        lhs = u.values.ravel()[pt] ** m
        if variant == "plain":
            rhs = c_fundamental(m) / t * conv
        else:
            lam = u.sup() ** (m - 1)
            if lam <= 1 / ((m - 1) * t):
                notes["lambda_below_threshold"] = notes.get("lambda_below_threshold", 0) + 1
                continue
            rhs = c_fundamental_resolvent(m) * lam * conv
        rows.append({"index": i, "t": float(t), "point": int(pt), "lhs": float(lhs), "rhs": float(rhs),
                     "margin": float(_margin(rhs, lhs))})
    return _finish(kind, rows, slack, notes, REFERENCES[kind])


def check_fundamental_zero_order(traj: Trajectory, J: Field, n_samples: int = 32, seed: int = 0,
                                 slack: float = DEFAULT_SLACK,
                                 contamination_tol: float = DEFAULT_CONTAMINATION) -> EstimateReport:
    """``u^m(x0,tau) <= C(m)(u(x0,tau)/tau + (1/tau) int_tau^{2tau} (u^m * J)(x0) dt)``.

    The time integral is a trapezoid rule over stored snapshots in ``[tau, 2 tau]``
    with the integrand interpolated linearly at ``2 tau``; ``tau`` ranges over
    snapshots whose doubled time is still on record.
    """
    m = traj.m
    times = traj.times
    snaps, skipped = eligible_snapshots(traj, contamination_tol)
    snaps = [s for s in snaps if 2 * s[1] <= times[-1] * (1 + 1e-12)]
    notes: dict = {"skipped": skipped}
    conv: dict[int, np.ndarray] = {}

    def integrand(k):
        if k not in conv:
            conv[k] = convolve(_pow(traj.snapshots[k][1], m), J).values.ravel()
        return conv[k]

    rows = []
    for i, t, u, pt in (_sample_pairs(snaps, n_samples, seed) if snaps else []):
        lo = int(np.searchsorted(times, t * (1 - 1e-12)))
        hi = min(int(np.searchsorted(times, 2 * t * (1 - 1e-12))), len(times) - 1)
        ts = list(times[lo:hi])
        vals = [integrand(k)[pt] for k in range(lo, hi)]
        t_end = times[hi]
        if t_end > 2 * t:
            w = (2 * t - times[hi - 1]) / (t_end - times[hi - 1])
            v_end = (1 - w) * integrand(hi - 1)[pt] + w * integrand(hi)[pt]
        else:
            v_end = integrand(hi)[pt]
        ts.append(2 * t)
        vals.append(v_end)
        integral = float(np.trapezoid(vals, ts))
        lhs = u.values.ravel()[pt] ** m
        rhs = c_fundamental(m) * (u.values.ravel()[pt] / t + integral / t)
        rows.append({"index": i, "t": float(t), "point": int(pt), "lhs": float(lhs), "rhs": float(rhs),
                     "margin": float(_margin(rhs, lhs))})
    return _finish("fundamental_zero_order", rows, slack, notes, REFERENCES["fundamental_zero_order"])


def _pow(u: Field, m: float) -> Field:
    return Field(u.grid, np.abs(u.values) ** m)


def fit_decay_exponent(traj: Trajectory, window: tuple[float, float]) -> dict:
    """Least-squares slope of ``log ||u(t)||_inf`` against ``log t`` on the window."""
    t = traj.times
    s = traj.sup_norms()
    sel = (t >= window[0]) & (t <= window[1]) & (t > 0) & (s > 0)
    if sel.sum() < 3:
        raise EstimateError(f"fewer than 3 snapshots in {window}")
    x, y = np.log(t[sel]), np.log(s[sel])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    return {"slope": float(slope), "intercept": float(icpt), "points": int(sel.sum()),
            "r_squared": float(1 - np.sum(resid**2) / ss) if ss > 0 else 1.0}


def check_decay_exponent(traj: Trajectory, window: tuple[float, float], expected: float,
                         rel_tol: float = 0.1) -> EstimateReport:
    """Fitted sup-norm slope within ``rel_tol`` (relative) of ``expected``."""
    fit = fit_decay_exponent(traj, window)
    err = abs(fit["slope"] - expected) / abs(expected)
    row = {**fit, "expected": expected, "relative_error": err, "margin": rel_tol - err}
    return EstimateReport("decay_fit", rel_tol - err, row, err <= rel_tol, 0.0, [row],
                          {"window": list(window), "rel_tol": rel_tol}, REFERENCES["decay_fit"])


def check_sup_retention(traj: Trajectory, fraction: float = 0.9) -> EstimateReport:
    """``||u(t)||_inf >= fraction ||u0||_inf`` at every snapshot (absence of smoothing)."""
    s0 = traj.u0.sup()
    rows = [{"t": float(t), "linf": float(u.sup()), "margin": (u.sup() - fraction * s0) / s0}
            for t, u in traj.snapshots]
    return _finish("sup_retention", rows, 0.0, {"fraction": fraction}, REFERENCES["sup_retention"])


def implication_exponents(gamma: float, q: float, r: float, p: float | None = None) -> dict:
    """Exponents of F and of ``||u(t0)||_r`` in the derived L^r-L^inf (p=None) or L^r-L^p bound."""
    if not 0 <= gamma < 1:
        raise EstimateError("gamma must lie in [0, 1)")
    if not 1 <= r <= q:
        raise EstimateError("need 1 <= r <= q")
    den = (1 - gamma) * q + gamma * r
    if p is None or math.isinf(p):
        return {"F": q / den, "norm": gamma * r / den}
    if not p > r:
        raise EstimateError("need p > r")
    return {"F": (q / p) * (p - r) / den, "norm": (r / p) * ((1 - gamma) * q + gamma * p) / den}


def check_smoothing_implications(traj: Trajectory, gamma: float, q: float = 1.0, r: float = 1.0,
                                 p: float = 3.0, exponent: float | None = None, C: float = 1.0,
                                 slack: float = DEFAULT_SLACK,
                                 contamination_tol: float = DEFAULT_CONTAMINATION,
                                 t_window: tuple[float, float] | None = None) -> EstimateReport:
    """Derived L^r-L^inf and L^r-L^p bounds over all snapshot pairs ``t0 < t1``.

    ``F(tau) = A tau^{-a}`` is fitted so that the input bound
    ``||u(t1)||_inf <= F(t1 - t0) ||u(t0)||_q^gamma`` is tight over the pairs
    (``a`` defaults to the fitted decay slope of the trajectory).
    """
    snaps, skipped = eligible_snapshots(traj, contamination_tol, t_window)
    notes: dict = {"skipped": skipped, "gamma": gamma, "q": q, "r": r, "p": p, "C": C}
    if len(snaps) < 2:
        return _finish("implications", [], slack, notes, REFERENCES["implications"])
    if exponent is None:
        ts = np.array([s[1] for s in snaps])
        exponent = -fit_decay_exponent(traj, (ts.min(), ts.max()))["slope"]
    norms = {i: {"q": lp_norm(u, q), "r": lp_norm(u, r), "p": lp_norm(u, p), "inf": u.sup()}
             for i, _, u in snaps}
    pairs = [(a, b) for a in range(len(snaps)) for b in range(a + 1, len(snaps))]
    A = 0.0
    for a, b in pairs:
        (i0, t0, _), (i1, t1, _) = snaps[a], snaps[b]
        A = max(A, norms[i1]["inf"] / ((t1 - t0) ** (-exponent) * norms[i0]["q"] ** gamma))
    notes.update(F_prefactor=A, F_exponent=exponent)
    ea, eb = implication_exponents(gamma, q, r), implication_exponents(gamma, q, r, p)
    rows = []
    for a, b in pairs:
        (i0, t0, _), (i1, t1, _) = snaps[a], snaps[b]
        F = A * (t1 - t0) ** (-exponent)
        rhs_a = C * F ** ea["F"] * norms[i0]["r"] ** ea["norm"]
        rhs_b = C * F ** eb["F"] * norms[i0]["r"] ** eb["norm"]
        ma = float(_margin(rhs_a, norms[i1]["inf"]))
        mb = float(_margin(rhs_b, norms[i1]["p"]))
        rows.append({"t0": float(t0), "t1": float(t1), "margin_inf": ma, "margin_p": mb,
                     "margin": min(ma, mb)})
    return _finish("implications", rows, slack, notes, REFERENCES["implications"])


# ------------------------------------------------------------------ structural properties

def check_lp_decay(traj: Trajectory, ps=(1.0, 2.0, math.inf), rel_tol: float = 1e-8) -> EstimateReport:
    """``||u(t2)||_p <= ||u(t1)||_p (1 + tol)`` for consecutive snapshots."""
    rows = []
    for (t1, u1), (t2, u2) in zip(traj.snapshots, traj.snapshots[1:]):
        for p in ps:
            a, b = lp_norm(u1, p), lp_norm(u2, p)
            margin = (a * (1 + rel_tol) - b) / max(a, b, 1e-300)
            rows.append({"t1": t1, "t2": t2, "p": p, "before": a, "after": b, "margin": float(margin)})
    return _finish("lp_decay", rows, 0.0, {"rel_tol": rel_tol}, REFERENCES["lp_decay"])


def check_comparison(lower: Trajectory, upper: Trajectory, rel_tol: float = 1e-8) -> EstimateReport:
    """Pointwise ``u <= v + tol ||v||_inf`` at matching snapshot times."""
    rows = []
    for (t, u), (s, v) in zip(lower.snapshots, upper.snapshots):
        if abs(t - s) > 1e-12 * max(1.0, t):
            raise EstimateError("trajectories must share snapshot times")
        scale = max(v.sup(), 1e-300)
        gap = float(np.min(v.values + rel_tol * scale - u.values))
        rows.append({"t": t, "min_gap": gap, "margin": gap / scale})
    return _finish("comparison", rows, 0.0, {"rel_tol": rel_tol}, REFERENCES["comparison"])


def check_mass(traj: Trajectory, rel_tol: float = 1e-8) -> EstimateReport:
    """Conserved mass when ``sigma(0) = 0``; otherwise the discrete balance
    ``int u_j - int u_{j-1} = -dt sigma(0) int u_j^m`` step by step."""
    s0 = traj.spec.symbol_at_zero
    rows = []
    m0 = traj.u0.integral()
    if s0 == 0:
        for d in traj.diagnostics:
            err = abs(d["mass"] - m0) / max(abs(m0), 1e-300)
            rows.append({"step": d["step"], "t": d["t"], "error": err, "margin": rel_tol - err})
        notes = {"mode": "conservation"}
    else:
        if not traj.tgrid:
            raise EstimateError("mass balance needs the time grid")
        prev = m0
        fields = {round(t, 15): u for t, u in traj.snapshots}
        steps = traj.tgrid.steps
        for d in traj.diagnostics:
            u = fields.get(round(d["t"], 15))
            if u is None:
                prev = d["mass"]
                continue
            dt = steps[d["step"] - 1]
            expected = -dt * s0 * _pow(u, traj.m).integral()
            got = d["mass"] - prev
            err = abs(got - expected) / max(abs(prev), 1e-300)
            rows.append({"step": d["step"], "t": d["t"], "error": err, "margin": rel_tol - err})
            prev = d["mass"]
        notes = {"mode": "balance", "symbol_at_zero": s0}
    return _finish("mass", rows, 0.0, {"rel_tol": rel_tol, **notes}, REFERENCES["mass"])


def check_time_monotonicity(traj: Trajectory, rel_tol: float = 1e-6) -> EstimateReport:
    """``t_{j+1}^{1/(m-1)} u(t_{j+1}) - t_j^{1/(m-1)} u(t_j) >= -eps`` at every point,
    ``eps = rel_tol ||u0||_inf dt_j / t_j``, for consecutive snapshot pairs with ``t_j > 0``."""
    m = traj.m
    if m <= 1:
        raise EstimateError("time monotonicity needs m > 1")
    e = 1 / (m - 1)
    u0max = traj.u0.sup()
    steps = traj.tgrid.steps if traj.tgrid else None
    times = traj.tgrid.times if traj.tgrid else None
    rows = []
    for (t1, u1), (t2, u2) in zip(traj.snapshots[1:], traj.snapshots[2:]):
        if steps is not None:
            j = int(np.searchsorted(times, t1 * (1 + 1e-12)))
            dt = steps[min(j, len(steps) - 1)]
        else:
            dt = t2 - t1
        eps = rel_tol * u0max * dt / t1
        diff = float(np.min(t2**e * u2.values - t1**e * u1.values))
        rows.append({"t1": t1, "t2": t2, "min_increment": diff, "eps": eps,
                     "margin": (diff + eps) / max(eps, 1e-300)})
    return _finish("time_monotonicity", rows, 0.0, {"rel_tol": rel_tol}, REFERENCES["time_monotonicity"])
