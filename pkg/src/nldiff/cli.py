"""``nldiff`` command line.

Exit codes: 0 pass, 1 a check failed, 2 usage or config error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

from . import __version__
from . import config as cfgmod
from . import experiment as xp
from .elliptic import EllipticError, EllipticSolveConfig, resolvent_step
from .estimates import EstimateError
from .evolution import EvolutionError, Trajectory
from .grid import Grid, GridError, read_field, write_field_csv
from .inequalities import InequalityError, quotient_scan
from .kernels import KernelError, classify_assumptions, compute_kernel
from .operators import OperatorError, describe, from_config

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
USAGE_ERRORS = (cfgmod.ConfigError, OperatorError, GridError, KernelError, InequalityError, EstimateError,
                ValueError, KeyError)


def _value(text: str):
    """Parse a TOML scalar or array; fall back to the raw string."""
    try:
        return cfgmod.tomllib.loads(f"v = {text}")["v"]
    except cfgmod.tomllib.TOMLDecodeError:
        return text


def _pairs(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise cfgmod.ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _value(v.strip())
    return out


def _operator(text: str) -> dict:
    """A config file path, or inline ``kind=fractional_laplacian,alpha=1``."""
    if Path(text).exists() or "=" not in text:
        return cfgmod.load_operator(text)
    return _pairs(text.split(","))


def _grid(text: str) -> Grid:
    try:
        return Grid.parse(text)
    except KeyError as exc:
        raise GridError(f"grid spec {text!r} is missing {exc}") from None


def _emit(data, path=None):
    text = json.dumps(xp._clean(data), indent=2, sort_keys=True, default=xp._json_default)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n")
    else:
        print(text)


# ------------------------------------------------------------------ subcommands

def cmd_op_info(a) -> int:
    grid = _grid(a.grid) if a.grid else None
    _emit(describe(from_config(_operator(a.operator), grid), grid), a.out)
    return EXIT_PASS


def _kernel_out(rep, a):
    _emit(rep.to_dict(), a.out)
    if a.field:
        write_field_csv(rep.kernel, a.field)


def cmd_heat_kernel(a) -> int:
    grid = _grid(a.grid)
    rep = compute_kernel(from_config(_operator(a.operator), grid), grid, "heat", a.t)
    _kernel_out(rep, a)
    return EXIT_PASS


def cmd_green(a) -> int:
    grid = _grid(a.grid)
    spec = from_config(_operator(a.operator), grid)
    kind = {"plain": "green", "resolvent": "resolvent", "quadrature": "quadrature"}[a.mode]
    rep = compute_kernel(spec, grid, kind)
    rep = classify_assumptions(rep, alpha=a.alpha, p_values=tuple(a.p or (1.2,)), refine=not a.no_refine)
    _kernel_out(rep, a)
    return EXIT_PASS


def cmd_resolvent(a) -> int:
    grid = _grid(a.grid)
    spec = from_config(_operator(a.operator), grid)
    f = read_field(a.input, grid)
    if f.grid != grid:
        raise cfgmod.ConfigError("input field grid does not match --grid")
    solver = EllipticSolveConfig(tol_residual=a.tol)
    try:
        rep = resolvent_step(spec, a.lam, f, a.m, solver)
    except EllipticError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_field_csv(rep.solution, a.out)
    if a.report:
        _emit({"residual": rep.residual, "newton_iters": rep.newton_iters, "inner_iters": rep.inner_iters,
               "clamped_fraction": rep.clamped_fraction, "mass_in": f.integral(),
               "mass_out": rep.solution.integral(), "lambda": a.lam, "m": a.m}, a.report)
    return EXIT_PASS


def _set_dotted(d: dict, key: str, value):
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
        if not isinstance(d, dict):
            raise cfgmod.ConfigError(f"--set {key}: {p} is not a table")
    d[parts[-1]] = value


def _inline_config(a) -> dict:
    g = _grid(a.grid or "n=256,L=32,dim=1")
    sched = {"T": a.T, "stepping": a.stepping, "snapshots": a.snapshots}
    if a.dt is not None:
        sched["dt"] = a.dt
    if a.dt0 is not None:
        sched["dt0"] = a.dt0
    data = {"operator": _operator(a.operator), "grid": {"dim": g.dim, "n": g.n, "L": g.side},
            "m": a.m, "schedule": sched, "initial": {"kind": a.u0},
            "checks": [{"name": c, "params": {}} for c in a.check or []]}
    if a.out:
        data["output"] = a.out
    return data


def cmd_simulate(a) -> int:
    sources = [cfgmod.load(p).to_dict() for p in a.config or []]
    sources += [cfgmod.preset(p).to_dict() for p in a.preset or []]
    if a.operator:
        sources.append(_inline_config(a))
    if not sources:
        raise cfgmod.ConfigError("give --config, --preset or --operator")
    overrides = _pairs(a.set)
    configs = []
    for data in sources:
        data = copy.deepcopy(data)
        for k, v in overrides.items():
            _set_dotted(data, k, v)
        configs.append(cfgmod.ExperimentConfig.from_dict(data))
    if a.dump_config:
        for c in configs:
            print(cfgmod.dumps(c))
        return EXIT_PASS
    if a.out and len(configs) > 1:
        dirs = [Path(a.out) / f"{i:02d}" for i in range(len(configs))]
    elif a.out:
        dirs = [Path(a.out)]
    else:
        dirs = [Path(c.output) for c in configs]
    results = xp.run_sweep(configs, dirs, jobs=a.jobs)
    for r in results:
        print(f"{r.directory}: status {r.status}" + (f" ({r.message})" if r.message else ""))
        for row in r.summary:
            m = row["margin"]
            mtxt = "n/a" if m is None else f"{m:.4g}"
            print(f"  [{'PASS' if row['passed'] else 'FAIL'}] {row['name']}: margin {mtxt}")
    return max(r.status for r in results)


def _kernel_overrides(path, traj: Trajectory) -> dict:
    rep = json.loads(Path(path).read_text())
    if rep.get("operator") != traj.spec.to_dict():
        raise cfgmod.ConfigError("kernel report operator does not match the trajectory")
    g = rep.get("grid", {})
    if (g.get("dim"), g.get("n"), float(g.get("L", math.nan))) != (traj.grid.dim, traj.grid.n, traj.grid.side):
        raise cfgmod.ConfigError("kernel report grid does not match the trajectory")
    fitted = rep.get("fitted", {})
    return {k: float(fitted[k]) for k in ("K1", "K2", "K3", "C1", "alpha")
            if isinstance(fitted.get(k), (int, float))}


def cmd_verify(a) -> int:
    traj = Trajectory.load(a.traj)
    params = _kernel_overrides(a.kernel, traj) if a.kernel else {}
    params.update(_pairs(a.param))
    if a.check not in cfgmod.CHECK_NAMES:
        raise cfgmod.ConfigError(f"unknown check {a.check!r}; choose from {', '.join(cfgmod.CHECK_NAMES)}")
    rep = xp.run_check(a.check, params, traj, xp.KernelCache(traj.spec, traj.grid))
    _emit(rep.to_dict(), a.out)
    if a.table:
        xp.write_table(a.table, rep.data_table)
    print(f"[{'PASS' if rep.passed else 'FAIL'}] {rep.kind}: margin {rep.margin_min:.4g}", file=sys.stderr)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_inequality(a) -> int:
    grid = _grid(a.grid)
    spec = from_config(_operator(a.operator), grid)
    rep = quotient_scan(spec, grid, a.check, a.family, samples=a.samples, seed=a.seed, alpha=a.alpha,
                        m=a.m, trend_factor=a.trend_factor)
    if a.out:
        xp.write_table(a.out, rep.to_rows())
    _emit(rep.to_dict(), a.report)
    unbounded = bool(rep.trend and rep.trend.get("unbounded_trend"))
    return EXIT_FAIL if rep.violation_count or unbounded else EXIT_PASS


def cmd_suite(a) -> int:
    from .suite import run_suite

    only = [s for item in a.only or [] for s in item.split(",") if s]
    results = run_suite(only, quick=a.quick)
    if a.out:
        _emit([r.to_dict() for r in results], a.out)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" +
          (f"; failed: {failed}" if failed else ""))
    return EXIT_FAIL if failed else EXIT_PASS


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nldiff", description="Nonlinear nonlocal diffusion laboratory.")
    p.add_argument("--version", action="version", version=f"nldiff {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def op_grid(sp, grid_default=None):
        sp.add_argument("--operator", required=True, help="config file or inline kind=...,alpha=...")
        sp.add_argument("--grid", default=grid_default, required=grid_default is None,
                        help='e.g. "n=256,L=32,dim=3"')

    sp = sub.add_parser("op-info", help="describe an operator")
    sp.add_argument("--operator", required=True)
    sp.add_argument("--grid")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_op_info)

    sp = sub.add_parser("heat-kernel", help="heat kernel H(., t)")
    op_grid(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--out")
    sp.add_argument("--field", help="write the kernel as CSV")
    sp.set_defaults(func=cmd_heat_kernel)

    sp = sub.add_parser("green", help="Green function, fitted constants and classification")
    op_grid(sp)
    sp.add_argument("--mode", choices=("plain", "resolvent", "quadrature"), default="plain")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--p", type=float, action="append", help="resolvent L^p exponents (repeatable)")
    sp.add_argument("--no-refine", action="store_true", help="skip the refinement ladder")
    sp.add_argument("--out")
    sp.add_argument("--field")
    sp.set_defaults(func=cmd_green)

    sp = sub.add_parser("resolvent", help="solve u + lambda (-L)[u^m] = f")
    op_grid(sp)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--m", type=float, default=2.0)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_resolvent)

    sp = sub.add_parser("simulate", help="run experiments from configs, presets or flags")
    sp.add_argument("--config", action="append")
    sp.add_argument("--preset", action="append", choices=sorted(cfgmod.PRESETS))
    sp.add_argument("--operator")
    sp.add_argument("--grid")
    sp.add_argument("--m", type=float, default=2.0)
    sp.add_argument("--u0", default="delta")
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--dt0", type=float)
    sp.add_argument("--stepping", choices=("uniform", "geometric"), default="uniform")
    sp.add_argument("--snapshots", choices=("geometric", "all"), default="geometric")
    sp.add_argument("--check", action="append", choices=cfgmod.CHECK_NAMES)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, e.g. grid.n=512")
    sp.add_argument("--out")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="evaluate one check on a saved trajectory")
    sp.add_argument("--traj", required=True)
    sp.add_argument("--kernel", help="kernel report JSON supplying fitted constants")
    sp.add_argument("--check", required=True)
    sp.add_argument("--param", action="append", metavar="KEY=VALUE")
    sp.add_argument("--out")
    sp.add_argument("--table")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("inequality", help="functional-inequality quotients over a family")
    op_grid(sp, "n=256,L=32,dim=1")
    sp.add_argument("--check", choices=("nash", "sobolev", "gns", "poincare", "sv"), required=True)
    sp.add_argument("--family", default="gaussians")
    sp.add_argument("--samples", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--m", type=float, default=2.0)
    sp.add_argument("--trend-factor", type=float, default=2.0)
    sp.add_argument("--out", help="CSV of (width, quotient)")
    sp.add_argument("--report", help="JSON report")
    sp.set_defaults(func=cmd_inequality)

    sp = sub.add_parser("suite", help="run the acceptance matrix")
    sp.add_argument("--quick", action="store_true", help="halved grids, doubled tolerances")
    sp.add_argument("--only", action="append", help="criterion numbers or tags, comma separated")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EvolutionError, EllipticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
