"""Nonlinear resolvent problem ``u + lam (-L)[u^m] = f`` for nonnegative ``f``.

Damped Newton on ``F(u) = u + lam A[phi(u)] - f`` with ``phi(u) = sign(u)|u|^m``.
The Jacobian ``I + lam A W`` (``W = m|u|^{m-1}``) is not symmetric, but with
``D = sqrt(W)`` the system ``J v = r`` is equivalent to the SPD problem

    (I + lam D A D) z = D r,        v = r - lam A[D z],

which is solved by preconditioned conjugate gradients. The preconditioner is
the constant-coefficient resolvent ``1/(1 + lam sigma mean(W))``.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .grid import Field, Grid
from .operators import OperatorSpec, apply_values, symbol_rgrid

WEIGHT_FLOOR = 1e-12
MAX_HALVINGS = 20


class EllipticError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclasses.dataclass(frozen=True)
class EllipticSolveConfig:
    tol_residual: float = 1e-9
    max_newton: int = 50
    max_inner: int = 500
    damping: float = 1.0
    positivity_clamp: bool = True
    allow_sign_change: bool = False

    def __post_init__(self):
        if self.allow_sign_change and self.positivity_clamp:
            raise ValueError("allow_sign_change needs positivity_clamp = False")
        if not 0 < self.tol_residual <= 1e-3:
            raise ValueError(f"tol_residual must lie in (0, 1e-3], got {self.tol_residual}")
        if self.max_newton < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")


@dataclasses.dataclass(frozen=True, eq=False)
class EllipticSolveReport:
    solution: Field
    residual: float
    newton_iters: int
    inner_iters: int
    clamped_fraction: float


def nonlinearity(values: np.ndarray, m: float) -> np.ndarray:
    if m == 1:
        return values
    return np.sign(values) * np.abs(values) ** m


def residual_values(spec: OperatorSpec, lam: float, u: np.ndarray, f: np.ndarray, m: float,
                    grid: Grid) -> np.ndarray:
    return u + lam * apply_values(spec, grid, nonlinearity(u, m)) - f


def relative_residual(spec: OperatorSpec, lam: float, u: Field, f: Field, m: float) -> float:
    """``||u + lam A[phi(u)] - f||_2 / ||f||_2`` recomputed from scratch."""
    r = residual_values(spec, lam, u.values, f.values, m, u.grid)
    scale = np.linalg.norm(f.values)
    return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))


def _spectral_solve(grid: Grid, mult: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.fft.irfftn(mult * np.fft.rfftn(values), s=grid.shape, axes=range(grid.dim))


def _pcg(matvec, precond, b: np.ndarray, tol: float, max_iter: int,
         x0: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - matvec(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x, 0
    z = precond(r)
    p = z.copy()
    rz = np.vdot(r, z)
    for it in range(1, max_iter + 1):
        Ap = matvec(p)
        step = rz / np.vdot(p, Ap)
        x += step * p
        r -= step * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
        z = precond(r)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iter


def resolvent_step(spec: OperatorSpec, lam: float, f: Field, m: float,
                   cfg: EllipticSolveConfig | None = None) -> EllipticSolveReport:
    """Solve ``u + lam (-L)[u^m] = f`` to ``||F||_2 <= tol ||f||_2``."""
    cfg = cfg or EllipticSolveConfig()
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if f.values.min() < -1e-12 and not cfg.allow_sign_change:
        raise ValueError("f must be nonnegative; sign-changing data needs allow_sign_change")
    g = f.grid
    fv = f.values.copy() if cfg.allow_sign_change else np.maximum(f.values, 0.0)
    fnorm = np.linalg.norm(fv)
    if lam == 0 or fnorm == 0:
        return EllipticSolveReport(Field(g, fv), 0.0, 0, 0, 0.0)

    sig = symbol_rgrid(spec, g)
    if m == 1:
        u = _spectral_solve(g, 1.0 / (1.0 + lam * sig), fv)
        res = np.linalg.norm(residual_values(spec, lam, u, fv, 1.0, g)) / fnorm
        return EllipticSolveReport(Field(g, u), float(res), 0, 0, 0.0)

    def F(u):
        return residual_values(spec, lam, u, fv, m, g)

    u = fv.copy()
    r = F(u)
    res = np.linalg.norm(r) / fnorm
    inner_total = 0
    for it in range(cfg.max_newton + 1):
        if res <= cfg.tol_residual:
            neg = u < 0
            if not (cfg.positivity_clamp and neg.any()):
                return EllipticSolveReport(Field(g, u), float(res), it, inner_total, 0.0)
            u_c = np.where(neg, 0.0, u)
            r_c = F(u_c)
            res_c = np.linalg.norm(r_c) / fnorm
            if res_c <= cfg.tol_residual:
                return EllipticSolveReport(Field(g, u_c), float(res_c), it, inner_total, float(neg.mean()))
            # u already solves the equation; further Newton steps cannot lift it
            raise EllipticError(
                f"the unconstrained solution dips to {u.min():.3e} and clamping it breaks the tolerance "
                f"(clamped residual {res_c:.3e})", float(res_c))
        if it == cfg.max_newton:
            break
        w = np.maximum(m * np.abs(u) ** (m - 1), WEIGHT_FLOOR)
        d = np.sqrt(w)
        pre = 1.0 / (1.0 + lam * sig * w.mean())

        def matvec(z, d=d):
            return z + lam * d * apply_values(spec, g, d * z)

        def precond(z, pre=pre):
            return _spectral_solve(g, pre, z)

        # the inner error e maps to a Newton-residual error lam A[D e], which can be
        # much larger than e; tighten until the true linear residual is small
        forcing = min(1e-2, max(res, 1e-6)) * 1e-2
        z = None
        rnorm = np.linalg.norm(r)
        while True:
            z, k = _pcg(matvec, precond, d * (-r), forcing, cfg.max_inner, z)
            inner_total += k
            v = -r - lam * apply_values(spec, g, d * z)
            lin = v + lam * apply_values(spec, g, w * v) + r
            if np.linalg.norm(lin) <= 0.1 * rnorm or forcing <= 1e-15:
                break
            forcing *= 1e-3

        # Newton direction is a descent direction for ||F||; clamping is kept only
        # when it does not spoil the decrease
        theta = cfg.damping
        for _ in range(MAX_HALVINGS + 1):
            trial = u + theta * v
            accepted = None
            if cfg.positivity_clamp and trial.min() < 0:
                clamped = np.maximum(trial, 0.0)
                r_c = F(clamped)
                if np.linalg.norm(r_c) / fnorm < res:
                    accepted = clamped, r_c
            if accepted is None:
                r_t = F(trial)
                if np.linalg.norm(r_t) / fnorm < res:
                    accepted = trial, r_t
            if accepted is not None:
                break
            theta *= 0.5
        else:
            raise EllipticError(
                f"line search failed after {MAX_HALVINGS} halvings (residual {res:.3e})", float(res)
            )
        u, r = accepted
        res = np.linalg.norm(r) / fnorm
    detail = ""
    if cfg.positivity_clamp and u.min() < 0:
        detail = f"; the unconstrained solution dips to {u.min():.3e} and clamping it breaks the tolerance"
    raise EllipticError(f"no convergence after {cfg.max_newton} Newton steps (residual {res:.3e}){detail}",
                        float(res))


def picard_solve(spec: OperatorSpec, lam: float, f: Field, m: float, tol: float = 1e-13,
                 max_iter: int = 10000) -> Field:
    """Fixed-point iteration ``u <- f - lam A[u^m]``; converges only for small ``lam``."""
    g = f.grid
    u = f.values.copy()
    for _ in range(max_iter):
        nxt = f.values - lam * apply_values(spec, g, nonlinearity(u, m))
        if np.abs(nxt - u).max() <= tol * max(np.abs(f.values).max(), 1e-300):
            return Field(g, nxt)
        u = nxt
    raise EllipticError("Picard iteration did not converge")
