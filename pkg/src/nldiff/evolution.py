"""Backward-Euler time stepping ``u_j + dt_j (-L)[u_j^m] = u_{j-1}``.

Each step is one nonlinear resolvent solve. Trajectories keep a subset of
snapshots (all steps or geometrically spaced times) plus per-step diagnostics.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .elliptic import EllipticError, EllipticSolveConfig, resolvent_step
from .grid import (Field, Grid, lp_norm, mass_outside_central_half, read_field,
                   write_field_bin, write_field_csv)
from .operators import OperatorSpec, symbol_grid

DIAGNOSTIC_COLUMNS = ("step", "t", "residual", "newton_iters", "mass", "l1", "l2", "linf",
                      "boundary_contamination")


class EvolutionError(RuntimeError):
    """Solver failure at ``step``; ``partial`` holds the trajectory up to the last good step."""

    def __init__(self, message: str, step: int, residual: float | None = None, partial=None):
        super().__init__(message)
        self.step = step
        self.residual = residual
        self.partial = partial


@dataclasses.dataclass(frozen=True)
class TimeGrid:
    steps: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(float(s) for s in self.steps))
        if not self.steps:
            raise ValueError("a time grid needs at least one step")
        if min(self.steps) <= 0:
            raise ValueError("time steps must be positive")

    @classmethod
    def uniform(cls, T: float, dt: float) -> "TimeGrid":
        if not (T > 0 and dt > 0):
            raise ValueError("T and dt must be positive")
        n = max(1, math.ceil(T / dt - 1e-9))
        steps = [dt] * (n - 1)
        steps.append(T - dt * (n - 1))
        return cls(tuple(steps))

    @classmethod
    def geometric(cls, T: float, dt0: float, ratio: float = 1.05, dt_max: float | None = None) -> "TimeGrid":
        """Steps ``dt0 * ratio^j`` (capped at ``dt_max``); the last one ends exactly at T."""
        if not (T > 0 and dt0 > 0 and ratio >= 1):
            raise ValueError("need T > 0, dt0 > 0 and ratio >= 1")
        steps, t, dt = [], 0.0, dt0
        while t + dt < T * (1 - 1e-12):
            steps.append(dt)
            t += dt
            dt = dt * ratio if dt_max is None else min(dt * ratio, dt_max)
        steps.append(T - t)
        if len(steps) > 1 and steps[-1] < 1e-3 * steps[-2]:
            last = steps.pop()
            steps[-1] += last
        return cls(tuple(steps))

    @property
    def T(self) -> float:
        return float(math.fsum(self.steps))

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.steps)])

    def to_dict(self) -> dict:
        return {"steps": list(self.steps)}


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    grid: Grid
    spec: OperatorSpec
    m: float
    snapshots: tuple[tuple[float, Field], ...]
    diagnostics: tuple[dict, ...]
    tgrid: TimeGrid | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    @property
    def fields(self) -> list[Field]:
        return [u for _, u in self.snapshots]

    @property
    def u0(self) -> Field:
        return self.snapshots[0][1]

    def sup_norms(self) -> np.ndarray:
        return np.array([u.sup() for u in self.fields])

    def save(self, directory, fmt: str = "bin", meta: dict | None = None) -> Path:
        """Write ``meta.json``, ``diagnostics.csv`` and one field file per snapshot."""
        d = Path(directory)
        (d / "fields").mkdir(parents=True, exist_ok=True)
        files = []
        for i, (t, u) in enumerate(self.snapshots):
            name = f"fields/snap_{i:05d}.{ 'bin' if fmt == 'bin' else 'csv'}"
            (write_field_bin if fmt == "bin" else write_field_csv)(u, d / name)
            files.append({"index": i, "t": t, "file": name})
        with open(d / "diagnostics.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=DIAGNOSTIC_COLUMNS)
            w.writeheader()
            for row in self.diagnostics:
                w.writerow({k: row[k] for k in DIAGNOSTIC_COLUMNS})
        info = {
            "grid": self.grid.to_dict(),
            "operator": self.spec.to_dict(),
            "m": self.m,
            "snapshots": files,
            "steps": len(self.diagnostics),
        }
        if meta:
            info.update(meta)
        (d / "meta.json").write_text(json.dumps(info, indent=2, sort_keys=True))
        return d

    @classmethod
    def load(cls, directory, spec: OperatorSpec | None = None) -> "Trajectory":
        from .operators import from_config

        d = Path(directory)
        info = json.loads((d / "meta.json").read_text())
        g = Grid(info["grid"]["dim"], info["grid"]["n"], info["grid"]["L"])
        spec = spec or from_config(info["operator"], g)
        snaps = tuple((float(s["t"]), read_field(d / s["file"], g)) for s in info["snapshots"])
        diags = []
        with open(d / "diagnostics.csv") as fh:
            for row in csv.DictReader(fh):
                diags.append({k: (int(v) if k in ("step", "newton_iters") else float(v)) for k, v in row.items()})
        return cls(g, spec, float(info["m"]), snaps, tuple(diags))


def _snapshot_targets(T: float, first: float, per_decade: int) -> np.ndarray:
    lo = math.floor(math.log10(first) * per_decade) / per_decade
    hi = math.log10(T)
    return 10 ** np.arange(lo, hi + 1.0 / per_decade, 1.0 / per_decade)


def evolve(spec: OperatorSpec, u0: Field, m: float, tgrid: TimeGrid,
           cfg: EllipticSolveConfig | None = None, snapshots: str = "geometric",
           per_decade: int = 16) -> Trajectory:
    """Implicit mild-solution scheme; snapshot 0 is ``(0, u0)``."""
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if snapshots not in ("geometric", "all"):
        raise ValueError(f"unknown snapshot policy {snapshots!r}")
    cfg = cfg or EllipticSolveConfig()
    u = u0 if cfg.allow_sign_change else u0.nonneg()
    g = u.grid
    times = tgrid.times
    targets = _snapshot_targets(times[-1], times[1], per_decade) if snapshots == "geometric" else None
    next_target = 0
    snaps = [(0.0, u)]
    diags = []
    for j, dt in enumerate(tgrid.steps, start=1):
        try:
            rep = resolvent_step(spec, dt, u, m, cfg)
        except EllipticError as exc:
            if snaps[-1][0] < times[j - 1]:
                snaps.append((float(times[j - 1]), u))
            partial = Trajectory(g, spec, float(m), tuple(snaps), tuple(diags), tgrid)
            raise EvolutionError(f"step {j} (t={times[j]:.6g}): {exc}", j, exc.residual, partial) from exc
        u = rep.solution
        t = float(times[j])
        diags.append({
            "step": j, "t": t, "residual": rep.residual, "newton_iters": rep.newton_iters,
            "mass": u.integral(), "l1": lp_norm(u, 1), "l2": lp_norm(u, 2), "linf": lp_norm(u, np.inf),
            "boundary_contamination": mass_outside_central_half(u),
        })
        keep = snapshots == "all" or j == len(tgrid.steps)
        if targets is not None:
            while next_target < len(targets) and targets[next_target] <= t * (1 + 1e-12):
                keep = True
                next_target += 1
        if keep:
            snaps.append((t, u))
    return Trajectory(g, spec, float(m), tuple(snaps), tuple(diags), tgrid)


def rescale_trajectory(traj: Trajectory, Lambda: float) -> Trajectory:
    """``u_Lambda(x, t) = Lambda^{1/(m-1)} u(x, Lambda t)``."""
    if traj.m <= 1:
        raise ValueError("time scaling needs m > 1")
    if not Lambda > 0:
        raise ValueError("Lambda must be positive")
    a = Lambda ** (1.0 / (traj.m - 1))
    snaps = tuple((t / Lambda, u * a) for t, u in traj.snapshots)
    diags = tuple({**d, "t": d["t"] / Lambda, "mass": d["mass"] * a, "l1": d["l1"] * a,
                   "l2": d["l2"] * a, "linf": d["linf"] * a} for d in traj.diagnostics)
    tg = TimeGrid(tuple(s / Lambda for s in traj.tgrid.steps)) if traj.tgrid else None
    return Trajectory(traj.grid, traj.spec, traj.m, snaps, diags, tg)


# ------------------------------------------------------------------ reference solutions

def linear_semigroup(spec: OperatorSpec, u0: Field, t: float) -> Field:
    """Exact ``m = 1`` solution ``idft(u0_hat exp(-t sigma))``."""
    g = u0.grid
    s = symbol_grid(spec, g)
    return Field(g, np.fft.ifftn(np.exp(-t * s) * np.fft.fftn(u0.values)).real)


def ode_solution(y0: float, t, m: float):
    """Solution of ``Y' = -Y^m``, ``Y(0) = y0``."""
    t = np.asarray(t, dtype=float)
    if m == 1:
        return y0 * np.exp(-t)
    return (y0 ** (1 - m) + (m - 1) * t) ** (-1.0 / (m - 1))


def initial_datum(grid: Grid, kind: str, mass: float = 1.0, amplitude: float = 1.0,
                  seed: int = 0, width: float = 1.0) -> Field:
    """Presets: ``delta`` (one cell), ``noise`` (uniform on the central half),
    ``noise-full`` (uniform everywhere), ``gaussian``, ``constant``, ``file:PATH``."""
    if kind == "delta":
        return Field.delta(grid, mass)
    if kind in ("noise", "noise-full"):
        rng = np.random.default_rng(seed)
        vals = amplitude * rng.random(grid.shape)
        if kind == "noise":
            q = grid.n // 4
            mask = np.zeros(grid.shape, dtype=bool)
            mask[(slice(q, grid.n - q),) * grid.dim] = True
            vals = np.where(mask, vals, 0.0)
        return Field(grid, vals)
    if kind == "gaussian":
        r2 = grid.radius**2
        vals = np.exp(-0.5 * r2 / width**2)
        return Field(grid, mass * vals / (vals.sum() * grid.cell_volume))
    if kind == "constant":
        return Field.constant(grid, amplitude)
    if kind.startswith("file:"):
        u = read_field(Path(kind[5:]), grid)
        if u.grid != grid:
            raise ValueError("initial datum file grid does not match the run grid")
        return u
    raise ValueError(f"unknown initial datum {kind!r}")
