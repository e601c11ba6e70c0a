"""Run one configured experiment: evolve, verify, and write an artifact directory.

Layout::

    out/meta.json          resolved config and library versions
    out/trajectory/        snapshots, diagnostics.csv, meta.json
    out/kernels/*.json     kernel reports used by the checks
    out/checks/*.json|csv  one estimate report and table per check
    out/summary.json       one row per check
    out/FAILED             present only when the run did not finish

Outputs carry no timestamps, so identical configs give identical files.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
import math
import platform
from pathlib import Path

import numpy as np

from . import __version__
from . import estimates as est
from .config import ConfigError, ExperimentConfig
from .evolution import EvolutionError, Trajectory, evolve, initial_datum
from .grid import Grid, GridError
from .inequalities import check_energy
from .kernels import KernelReport, classify_assumptions, compute_kernel
from .operators import Convolution0Order, Identity, OperatorError, from_config

EXIT_PASS, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _clean(obj):
    """Make non-finite floats JSON-safe (``"inf"``, ``"nan"``)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_clean(data), indent=2, sort_keys=True, default=_json_default) + "\n")


def write_table(path, rows: list[dict]) -> None:
    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: _clean(r.get(k, "")) for k in keys})


def versions() -> dict:
    return {"nldiff": __version__, "numpy": np.__version__, "python": platform.python_version()}


# ------------------------------------------------------------------ check dispatch

class KernelCache:
    """Classified kernel reports keyed by (kind, alpha, p_values), built on demand."""

    def __init__(self, spec, grid: Grid):
        self.spec, self.grid = spec, grid
        self.reports: dict[str, KernelReport] = {}

    def get(self, kind: str = "green", alpha: float | None = None,
            p_values: tuple = (1.2,)) -> KernelReport:
        key = f"{kind}-alpha{alpha}-p{'_'.join(str(p) for p in p_values)}"
        if key not in self.reports:
            rep = compute_kernel(self.spec, self.grid, kind)
            self.reports[key] = classify_assumptions(rep, alpha=alpha, p_values=tuple(p_values))
        return self.reports[key]


ASSUMPTION_OF = {"G1": "G1", "G1prime": "G1prime", "combined": "G1", "G3": "G3", "absolute": "G2"}
_CONSTANT_KEYS = ("K1", "K2", "K3", "C1", "Cp", "CJp")


def _common(params: dict) -> dict:
    out = {}
    if "slack" in params:
        out["slack"] = float(params["slack"])
    if "contamination_tol" in params:
        out["contamination_tol"] = float(params["contamination_tol"])
    if "t_window" in params:
        out["t_window"] = tuple(params["t_window"])
    return out


def _alpha(traj: Trajectory, params: dict) -> float | None:
    a = params.get("alpha", traj.spec.alpha_effective)
    return None if a is None else float(a)


def run_check(name: str, params: dict, traj: Trajectory, kernels: KernelCache) -> est.EstimateReport:
    """Evaluate one named check on a trajectory; ``params`` are the check's options."""
    params = dict(params)
    spec, m, N = traj.spec, traj.m, traj.grid.dim
    mass = traj.u0.integral()
    if name in ("fundamental", "fundamental-resolvent"):
        variant = "plain" if name == "fundamental" else "resolvent"
        kernel = None
        if variant == "resolvent":
            kernel = kernels.get("resolvent")
        elif not isinstance(spec, Identity):
            kernel = kernels.get("green", _alpha(traj, params))
        return est.check_fundamental_bound(traj, kernel, variant, n_samples=int(params.get("samples", 32)),
                                           seed=int(params.get("seed", 0)), **_common(params))
    if name == "fundamental-zero-order":
        if not isinstance(spec, Convolution0Order):
            raise ConfigError("fundamental-zero-order needs a convolution_0order operator")
        kw = {k: v for k, v in _common(params).items() if k != "t_window"}
        return est.check_fundamental_zero_order(traj, spec.kernel, n_samples=int(params.get("samples", 32)),
                                                seed=int(params.get("seed", 0)), **kw)
    if name.startswith("smoothing:"):
        variant = name.split(":", 1)[1].replace("-", "_")
        over = {k: float(params[k]) for k in _CONSTANT_KEYS if k in params}
        p = params.get("p")
        p = float(p) if p is not None else None
        if variant == "zero_order":
            if not isinstance(spec, Convolution0Order):
                raise ConfigError("smoothing:zero-order needs a convolution_0order operator")
            p = math.inf if p is None else p
            over.setdefault("CJp", spec.lp_constant(p))
            P = est.EstimateParams(m=m, N=N, norm_u0_L1=mass, p=p, **over)
        elif variant == "absolute" and "C1" in over:
            P = est.EstimateParams(m=m, N=N, norm_u0_L1=mass, **over)
        else:
            if variant == "G3":
                p = 1.2 if p is None else p
            alpha = _alpha(traj, params)
            rep = kernels.get("green", alpha, (p,) if p is not None else (1.2,))
            P = est.EstimateParams.from_kernel(rep, m, mass, p=p, **over)
            if alpha is not None and P.alpha is None:
                P = dataclasses.replace(P, alpha=alpha)
        rep_out = est.check_smoothing(traj, P, variant, **_common(params))
        needed = ASSUMPTION_OF.get(variant)
        if needed and variant != "zero_order" and not (variant == "absolute" and "C1" in over):
            classes = kernels.get("green", _alpha(traj, params),
                                  (p,) if p is not None else (1.2,)).classification
            rep_out.notes["classification"] = list(classes)
            rep_out.notes["assumption_met"] = needed in classes
        return rep_out
    if name == "decay-fit":
        window = tuple(params.get("window", (traj.times[1], traj.times[-1])))
        expected = params.get("expected")
        if expected is None:
            a = _alpha(traj, params)
            expected = -N * est.theta(m, a, N) if a is not None else -1.0 / (m - 1)
        return est.check_decay_exponent(traj, window, float(expected), float(params.get("rel_tol", 0.1)))
    if name == "implications":
        a = _alpha(traj, params)
        gamma = params.get("gamma", a * est.theta(m, a, N) if a is not None else 0.0)
        return est.check_smoothing_implications(
            traj, float(gamma), q=float(params.get("q", 1.0)), r=float(params.get("r", 1.0)),
            p=float(params.get("p", 3.0)), C=float(params.get("C", 1.0)), **_common(params))
    if name == "lp-decay":
        return est.check_lp_decay(traj, rel_tol=float(params.get("rel_tol", 1e-8)))
    if name == "mass":
        return est.check_mass(traj, rel_tol=float(params.get("rel_tol", 1e-8)))
    if name == "time-monotonicity":
        return est.check_time_monotonicity(traj, rel_tol=float(params.get("rel_tol", 1e-6)))
    if name == "energy":
        return check_energy(traj, rel_tol=float(params.get("rel_tol", 1e-8)))
    if name == "sup-retention":
        return est.check_sup_retention(traj, float(params.get("fraction", 0.9)))
    raise ConfigError(f"unknown check {name!r}")


# ------------------------------------------------------------------ runs

@dataclasses.dataclass
class RunResult:
    status: int
    directory: Path
    summary: list[dict]
    message: str = ""


def build_run(cfg: ExperimentConfig):
    try:
        grid = cfg.grid.build()
        spec = from_config(cfg.operator, grid)
        u0 = initial_datum(grid, cfg.initial.kind, mass=cfg.initial.mass, amplitude=cfg.initial.amplitude,
                           seed=cfg.seed, width=cfg.initial.width)
    except (GridError, OperatorError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    return grid, spec, u0


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Evolve and check as configured; never raises for solver or check failures."""
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    failed = out / "FAILED"
    if failed.exists():
        failed.unlink()
    write_json(out / "meta.json", {"config": cfg.to_dict(), "versions": versions()})
    try:
        grid, spec, u0 = build_run(cfg)
    except ConfigError as exc:
        failed.write_text(f"config error: {exc}\n")
        return RunResult(EXIT_USAGE, out, [], str(exc))
    try:
        traj = evolve(spec, u0, cfg.m, cfg.schedule.time_grid(), cfg.solver, cfg.schedule.snapshots,
                      cfg.schedule.per_decade)
    except EvolutionError as exc:
        if exc.partial is not None:
            exc.partial.save(out / "trajectory", meta={"partial": True})
        failed.write_text(f"solver failure at step {exc.step}: {exc}\n")
        return RunResult(EXIT_SOLVER, out, [], str(exc))
    traj.save(out / "trajectory")

    kernels = KernelCache(spec, grid)
    summary = []
    (out / "checks").mkdir(exist_ok=True)
    for i, chk in enumerate(cfg.checks):
        tag = f"{i:02d}_{chk.name.replace(':', '_')}"
        try:
            rep = run_check(chk.name, chk.params, traj, kernels)
        except (ConfigError, est.EstimateError, ValueError) as exc:
            summary.append({"name": chk.name, "passed": False, "margin": None, "slack": None,
                            "reference": "", "error": str(exc)})
            continue
        write_json(out / "checks" / f"{tag}.json", rep.to_dict())
        write_table(out / "checks" / f"{tag}.csv", rep.data_table)
        summary.append({"name": chk.name, "passed": rep.passed, "margin": rep.margin_min,
                        "slack": rep.slack_used, "reference": rep.reference})
    if kernels.reports:
        (out / "kernels").mkdir(exist_ok=True)
        for key, rep in kernels.reports.items():
            write_json(out / "kernels" / f"{key}.json", rep.to_dict())
    write_json(out / "summary.json", {"checks": summary})
    ok = all(r["passed"] for r in summary)
    if not ok:
        failed.write_text("one or more checks failed\n")
    return RunResult(EXIT_PASS if ok else EXIT_CHECK_FAILED, out, summary)


def _run_entry(args):
    cfg, out = args
    res = run_experiment(cfg, out)
    return res.status, str(res.directory), res.summary, res.message


def run_sweep(configs: list[ExperimentConfig], out_dirs: list, jobs: int = 1) -> list[RunResult]:
    """Run several experiments, up to ``jobs`` at a time; each owns its directory."""
    if len({str(d) for d in out_dirs}) != len(out_dirs):
        raise ConfigError("sweep entries must write to distinct directories")
    entries = list(zip(configs, out_dirs))
    if jobs <= 1 or len(entries) <= 1:
        results = [_run_entry(e) for e in entries]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_entry, entries))
    return [RunResult(s, Path(d), summ, msg) for s, d, summ, msg in results]
