"""Catalogue of symmetric nonnegative translation-invariant operators.

Every operator is realized through its Fourier symbol ``sigma(xi) >= 0`` with
angular frequencies, so ``(-Delta)^(a/2)`` has symbol ``|xi|^a``. Only the
0-order convolution operator ``I - J*`` carries an explicit Levy density.
"""

from __future__ import annotations

import dataclasses
from functools import lru_cache
from pathlib import Path

import numpy as np

from .grid import Field, Grid, GridError, dft, inner, lp_norm, read_field


class OperatorError(ValueError):
    pass


KERNEL_MASS_TOL = 1e-8


class OperatorSpec:
    """Base class; subclasses are frozen dataclasses."""

    kind: str = ""

    def symbol_components(self, xi: list[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    @property
    def alpha_effective(self) -> float | None:
        return None

    @property
    def symbol_at_zero(self) -> float:
        return float(self.symbol_components([np.zeros(1)] * self._dim_hint()).ravel()[0])

    @property
    def conserves_mass(self) -> bool:
        return self.symbol_at_zero == 0.0

    def _dim_hint(self) -> int:
        return 1

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __add__(self, other: "OperatorSpec") -> "Sum":
        return Sum(self, other)


def _norm2(xi):
    return sum(np.asarray(c, dtype=float) ** 2 for c in xi)


def _check_alpha(alpha, hi=2.0, closed=True):
    ok = 0 < alpha <= hi if closed else 0 < alpha < hi
    if not ok:
        bracket = "]" if closed else ")"
        raise OperatorError(f"alpha must lie in (0, {hi}{bracket}, got {alpha}")


@dataclasses.dataclass(frozen=True)
class FractionalLaplacian(OperatorSpec):
    alpha: float
    kind = "fractional_laplacian"

    def __post_init__(self):
        _check_alpha(self.alpha)

    def symbol_components(self, xi):
        return _norm2(xi) ** (self.alpha / 2)

    @property
    def alpha_effective(self):
        return self.alpha

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}


@dataclasses.dataclass(frozen=True)
class Laplacian(OperatorSpec):
    kind = "laplacian"

    def symbol_components(self, xi):
        return _norm2(xi)

    @property
    def alpha_effective(self):
        return 2.0

    def to_dict(self):
        return {"kind": self.kind}


@dataclasses.dataclass(frozen=True)
class AnisotropicFractionalSum(OperatorSpec):
    """Sum of one-dimensional fractional Laplacians, one order per axis."""

    alphas: tuple[float, ...]
    kind = "anisotropic_fractional_sum"

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if not self.alphas:
            raise OperatorError("need at least one axis order")
        for a in self.alphas:
            _check_alpha(a, closed=False)

    def symbol_components(self, xi):
        if len(xi) != len(self.alphas):
            raise OperatorError(f"operator has {len(self.alphas)} axes, frequencies have {len(xi)}")
        return sum(np.abs(c) ** a for c, a in zip(xi, self.alphas))

    def _dim_hint(self):
        return len(self.alphas)

    @property
    def alpha_effective(self):
        # N / sum(1/alpha_i) replaces N/alpha in the heat-kernel scaling
        return len(self.alphas) / sum(1.0 / a for a in self.alphas)

    def to_dict(self):
        return {"kind": self.kind, "alphas": list(self.alphas)}


@dataclasses.dataclass(frozen=True)
class RelativisticSchrodinger(OperatorSpec):
    """``(kappa^2 I - Delta)^(alpha/2) - kappa^alpha I``."""

    alpha: float
    kappa: float
    kind = "relativistic_schrodinger"

    def __post_init__(self):
        _check_alpha(self.alpha, closed=False)
        if not self.kappa > 0:
            raise OperatorError(f"kappa must be positive, got {self.kappa}")

    def symbol_components(self, xi):
        # kappa^a * expm1((a/2) log1p(|xi|^2/kappa^2)): nonnegative, no cancellation near 0
        k = self.kappa
        return k**self.alpha * np.expm1(0.5 * self.alpha * np.log1p(_norm2(xi) / k**2))

    @property
    def alpha_effective(self):
        return self.alpha

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "kappa": self.kappa}


@dataclasses.dataclass(frozen=True)
class BesselResolvent(OperatorSpec):
    """``(I - Delta)^(alpha/2)``."""

    alpha: float
    kind = "bessel_resolvent"

    def __post_init__(self):
        _check_alpha(self.alpha, closed=False)

    def symbol_components(self, xi):
        return (1.0 + _norm2(xi)) ** (self.alpha / 2)

    @property
    def alpha_effective(self):
        return self.alpha

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}


@dataclasses.dataclass(frozen=True)
class GeometricStable(OperatorSpec):
    """Generator of the geometric alpha-stable process, symbol ``log(1 + |xi|^alpha)``."""

    alpha: float
    kind = "geometric_stable"

    def __post_init__(self):
        _check_alpha(self.alpha, closed=False)

    def symbol_components(self, xi):
        return np.log1p(_norm2(xi) ** (self.alpha / 2))

    @property
    def alpha_effective(self):
        return self.alpha

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}


@dataclasses.dataclass(frozen=True)
class Identity(OperatorSpec):
    kind = "identity"

    def symbol_components(self, xi):
        return np.ones(np.broadcast(*xi).shape) if len(xi) > 1 else np.ones_like(np.asarray(xi[0], float))

    def to_dict(self):
        return {"kind": self.kind}


@dataclasses.dataclass(frozen=True)
class Shifted(OperatorSpec):
    """``c I + base``."""

    c: float
    base: OperatorSpec
    kind = "shifted"

    def __post_init__(self):
        if not self.c >= 0:
            raise OperatorError(f"shift must be nonnegative, got {self.c}")

    def symbol_components(self, xi):
        return self.c + self.base.symbol_components(xi)

    @property
    def symbol_at_zero(self):
        return self.c + self.base.symbol_at_zero

    def _dim_hint(self):
        return self.base._dim_hint()

    @property
    def alpha_effective(self):
        return self.base.alpha_effective

    def to_dict(self):
        return {"kind": self.kind, "shift_c": self.c, "base": self.base.to_dict()}


@dataclasses.dataclass(frozen=True)
class Sum(OperatorSpec):
    left: OperatorSpec
    right: OperatorSpec
    kind = "sum"

    def symbol_components(self, xi):
        return self.left.symbol_components(xi) + self.right.symbol_components(xi)

    @property
    def symbol_at_zero(self):
        return self.left.symbol_at_zero + self.right.symbol_at_zero

    def _dim_hint(self):
        return max(self.left._dim_hint(), self.right._dim_hint())

    @property
    def alpha_effective(self):
        orders = [a for a in (self.left.alpha_effective, self.right.alpha_effective) if a is not None]
        return max(orders) if orders else None

    def to_dict(self):
        return {"kind": self.kind, "left": self.left.to_dict(), "right": self.right.to_dict()}


@dataclasses.dataclass(frozen=True, eq=False)
class Convolution0Order(OperatorSpec):
    """``I - J*`` with a nonnegative, symmetric, unit-mass density ``J``.

    The density lives on a grid; the operator can only be applied on that grid.
    """

    kernel: Field
    family: dict | None = None
    kind = "convolution_0order"

    def __post_init__(self):
        J = self.kernel.values
        if J.min() < 0:
            raise OperatorError("kernel must be nonnegative")
        if not np.allclose(J, _reflect(J), rtol=1e-12, atol=1e-14 * max(J.max(), 1.0)):
            raise OperatorError("kernel must be symmetric under x -> -x")
        mass = self.kernel.integral()
        if abs(mass - 1.0) > KERNEL_MASS_TOL:
            raise OperatorError(f"kernel mass must be 1, got {mass!r}")

    @property
    def grid(self) -> Grid:
        return self.kernel.grid

    def _dim_hint(self):
        return self.grid.dim

    def symbol_components(self, xi):
        g = self.grid
        xi = [np.asarray(c, dtype=float) for c in xi]
        if len(xi) != g.dim:
            raise OperatorError("frequency dimension does not match kernel grid")
        shape = np.broadcast(*xi).shape if len(xi) > 1 else xi[0].shape
        flat = [np.broadcast_to(c, shape).ravel() for c in xi]
        coords = [c.ravel() for c in np.meshgrid(*([g.axis] * g.dim), indexing="ij")]
        J = self.kernel.values.ravel()
        mask = J > 0
        phase = sum(np.outer(f, c[mask]) for f, c in zip(flat, coords))
        jhat = g.cell_volume * (np.cos(phase) @ J[mask])
        return np.maximum(1.0 - jhat, 0.0).reshape(shape)

    @property
    def conserves_mass(self):
        return True

    @property
    def symbol_at_zero(self):
        return 0.0

    def symbol_grid(self) -> np.ndarray:
        jhat = dft(self.kernel).coefficients.real
        out = np.maximum(1.0 - jhat, 0.0)
        # unit mass is a construction invariant; pin the zero mode so mass is conserved exactly
        out.flat[0] = 0.0
        return out

    def lp_constant(self, p: float) -> float:
        """``C_{J,p} = ||J||_p``."""
        return lp_norm(self.kernel, p)

    def to_dict(self):
        if self.family is not None:
            return {"kind": self.kind, **self.family}
        return {"kind": self.kind, "kernel": "inline"}


def _reflect(a: np.ndarray) -> np.ndarray:
    # x_j -> -x_j maps index j to (n - j) mod n on the [-L/2, L/2) grid
    out = a
    for ax in range(a.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


# ------------------------------------------------------------------ kernels J

def kernel_family(grid: Grid, name: str, width: float = 1.0) -> Field:
    """Unit-mass radial densities: ``gaussian``, ``box``, ``exponential``."""
    r = grid.radius
    if name == "gaussian":
        vals = np.exp(-0.5 * (r / width) ** 2)
    elif name == "box":
        vals = (r <= width).astype(float)
    elif name == "exponential":
        vals = np.exp(-r / width)
    else:
        raise OperatorError(f"unknown kernel family {name!r}")
    total = vals.sum() * grid.cell_volume
    if total == 0:
        raise OperatorError("kernel family is empty on this grid; increase width")
    return Field(grid, vals / total)


def convolution_operator(grid: Grid, name: str = "gaussian", width: float = 1.0) -> Convolution0Order:
    return Convolution0Order(kernel_family(grid, name, width), family={"family": name, "width": width})


# ------------------------------------------------------------------ symbols

def symbol(spec: OperatorSpec, xi) -> np.ndarray | float:
    """Symbol at frequency vectors ``xi`` (last axis = components)."""
    xi = np.asarray(xi, dtype=float)
    scalar = xi.ndim <= 1
    comps = [xi[..., i] for i in range(xi.shape[-1])] if xi.ndim else [xi]
    out = spec.symbol_components(comps)
    return float(np.asarray(out).ravel()[0]) if scalar else out


@lru_cache(maxsize=64)
def _symbol_grid_cached(spec: OperatorSpec, grid: Grid) -> np.ndarray:
    if isinstance(spec, Convolution0Order):
        if spec.grid != grid:
            raise GridError("0-order kernel lives on a different grid")
        out = spec.symbol_grid()
    elif isinstance(spec, Shifted):
        out = spec.c + _symbol_grid_cached(spec.base, grid)
    elif isinstance(spec, Sum):
        out = _symbol_grid_cached(spec.left, grid) + _symbol_grid_cached(spec.right, grid)
    else:
        out = np.broadcast_to(spec.symbol_components(grid.frequencies()), grid.shape).copy()
    out.setflags(write=False)
    return out


def symbol_grid(spec: OperatorSpec, grid: Grid) -> np.ndarray:
    """Symbol sampled on all grid frequencies (numpy FFT order)."""
    return _symbol_grid_cached(spec, grid)


def symbol_rgrid(spec: OperatorSpec, grid: Grid) -> np.ndarray:
    """Symbol on the half spectrum used by ``rfftn``."""
    return symbol_grid(spec, grid)[..., : grid.n // 2 + 1]


def apply_values(spec: OperatorSpec, grid: Grid, values: np.ndarray) -> np.ndarray:
    """Array-level ``(-L)[u]`` for hot loops."""
    if isinstance(spec, Identity):
        return np.array(values, dtype=float)
    s = symbol_rgrid(spec, grid)
    return np.fft.irfftn(s * np.fft.rfftn(values), s=grid.shape, axes=range(grid.dim))


def apply(spec: OperatorSpec, u: Field) -> Field:
    return Field(u.grid, apply_values(spec, u.grid, u.values))


def quadratic_form(spec: OperatorSpec, f: Field) -> float:
    """``Q[f] = int f (-L)[f]`` evaluated in Parseval form."""
    g = f.grid
    fh = np.fft.fftn(f.values)
    return float(np.sum(symbol_grid(spec, g) * np.abs(fh) ** 2) * g.cell_volume / g.size)


def quadratic_form_direct(spec: OperatorSpec, f: Field) -> float:
    return inner(f, apply(spec, f))


# ------------------------------------------------------------------ config

def from_config(cfg: dict, grid: Grid | None = None) -> OperatorSpec:
    """Build a spec from a flat or nested mapping.

    Keys: ``kind``, ``alpha``, ``kappa``, ``alphas``, ``shift_c``, ``base``,
    ``left``, ``right``, and for 0-order operators ``family``/``width`` or
    ``kernel_file``. A nonzero ``shift_c`` on any kind wraps it in ``Shifted``.
    """
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind is None:
        raise OperatorError("operator config needs a 'kind'")
    shift = float(cfg.pop("shift_c", 0.0))
    allowed = {
        "fractional_laplacian": {"alpha"},
        "laplacian": set(),
        "anisotropic_fractional_sum": {"alphas"},
        "relativistic_schrodinger": {"alpha", "kappa"},
        "bessel_resolvent": {"alpha"},
        "geometric_stable": {"alpha"},
        "identity": set(),
        "convolution_0order": {"family", "width", "kernel_file"},
        "shifted": {"base"},
        "sum": {"left", "right"},
    }
    if kind not in allowed:
        raise OperatorError(f"unknown operator kind {kind!r}")
    extra = set(cfg) - allowed[kind]
    if extra:
        raise OperatorError(f"unknown keys for operator {kind!r}: {sorted(extra)}")
    if kind == "fractional_laplacian":
        spec = FractionalLaplacian(float(cfg["alpha"]))
    elif kind == "laplacian":
        spec = Laplacian()
    elif kind == "anisotropic_fractional_sum":
        spec = AnisotropicFractionalSum(tuple(cfg["alphas"]))
    elif kind == "relativistic_schrodinger":
        spec = RelativisticSchrodinger(float(cfg["alpha"]), float(cfg.get("kappa", 1.0)))
    elif kind == "bessel_resolvent":
        spec = BesselResolvent(float(cfg["alpha"]))
    elif kind == "geometric_stable":
        spec = GeometricStable(float(cfg["alpha"]))
    elif kind == "identity":
        spec = Identity()
    elif kind == "convolution_0order":
        if grid is None:
            raise OperatorError("0-order operators need a grid to carry their kernel")
        if "kernel_file" in cfg:
            J = read_field(Path(cfg["kernel_file"]), grid)
            if J.grid != grid:
                raise OperatorError("kernel file grid does not match the run grid")
            spec = Convolution0Order(J, family=None)
        else:
            spec = convolution_operator(grid, cfg.get("family", "gaussian"), float(cfg.get("width", 1.0)))
    elif kind == "shifted":
        spec = from_config(cfg["base"], grid)
    else:
        spec = Sum(from_config(cfg["left"], grid), from_config(cfg["right"], grid))
    if kind == "shifted" or shift:
        spec = Shifted(shift, spec)
    return spec


def describe(spec: OperatorSpec, grid: Grid | None = None) -> dict:
    info = {
        "operator": spec.to_dict(),
        "alpha_effective": spec.alpha_effective,
        "symbol_at_zero": spec.symbol_at_zero,
        "conserves_mass": spec.conserves_mass,
    }
    if grid is not None:
        s = symbol_grid(spec, grid)
        info["symbol_min"] = float(s.min())
        info["symbol_max"] = float(s.max())
        info["grid"] = grid.to_dict()
    return info


def is_mass_conserving(spec: OperatorSpec) -> bool:
    return spec.conserves_mass

