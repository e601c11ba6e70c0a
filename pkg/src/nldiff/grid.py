"""Periodic torus grids, real fields and the spectral substrate.

Transform convention
--------------------
Points are ``x_j = -L/2 + j*h`` per axis, so the origin sits at index ``n//2``.
The forward transform approximates the continuous Fourier transform::

    dft(u)(xi_k) = h^d * sum_j u(x_j) exp(-i xi_k . x_j),   xi_k = 2*pi*k/L

and the inverse is the matching Fourier series::

    idft(s)(x_j) = L^{-d} * sum_k s(xi_k) exp(+i xi_k . x_j)

With these, ``idft(dft(u)) == u``, Parseval reads
``sum |u|^2 h^d == L^{-d} sum |s|^2`` and ``convolve(u, v) == idft(dft(u) * dft(v))``
approximates ``int u(x - y) v(y) dy``. Kernels built as ``idft(multiplier)``
come out centered at the origin without any shifting.
"""

from __future__ import annotations

import dataclasses
import struct
from functools import cached_property
from pathlib import Path

import numpy as np

DEFAULT_MAX_POINTS = 1 << 24
NONNEG_CLAMP = -1e-12


class GridError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L/2, L/2)^dim``."""

    dim: int
    n: int
    side: float
    max_points: int = dataclasses.field(default=DEFAULT_MAX_POINTS, compare=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise GridError(f"n must be a power of two >= 8, got {self.n}")
        if not self.side > 0:
            raise GridError(f"side length must be positive, got {self.side}")
        if self.n**self.dim > self.max_points:
            raise GridError(f"{self.n}^{self.dim} points exceeds the cap of {self.max_points}")

    @classmethod
    def parse(cls, text: str) -> "Grid":
        """Build from ``"n=256,L=32,dim=3"``."""
        items = dict(part.split("=", 1) for part in text.replace(" ", "").split(",") if part)
        unknown = set(items) - {"n", "L", "dim"}
        if unknown:
            raise GridError(f"unknown grid keys: {sorted(unknown)}")
        return cls(dim=int(items.get("dim", 1)), n=int(items["n"]), side=float(items["L"]))

    @property
    def h(self) -> float:
        return self.side / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def origin_index(self) -> tuple[int, ...]:
        return (self.n // 2,) * self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.side / 2 + self.h * np.arange(self.n)

    @cached_property
    def wavenumbers_1d(self) -> np.ndarray:
        """Angular frequencies ``2*pi*k/L`` in numpy FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def coordinates(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis] * self.dim), indexing="ij", sparse=True)

    def frequencies(self) -> list[np.ndarray]:
        """Sparse per-axis frequency arrays broadcasting to ``shape``."""
        return np.meshgrid(*([self.wavenumbers_1d] * self.dim), indexing="ij", sparse=True)

    @cached_property
    def radius(self) -> np.ndarray:
        r2 = sum(c**2 for c in self.coordinates())
        return np.sqrt(np.broadcast_to(r2, self.shape))

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(+i xi_k L/2) = (-1)^k per axis
        k = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)
        s = np.where(k % 2 == 0, 1.0, -1.0)
        out = np.ones(self.shape)
        for ax in range(self.dim):
            shp = [1] * self.dim
            shp[ax] = self.n
            out = out * s.reshape(shp)
        return out

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n": self.n, "L": self.side}


@dataclasses.dataclass(frozen=True, eq=False)
class Field:
    """A real function sampled on a grid (values shaped ``grid.shape``)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        return cls(grid, np.broadcast_to(fn(*grid.coordinates()), grid.shape))

    @classmethod
    def delta(cls, grid: Grid, mass: float = 1.0) -> "Field":
        """Discrete delta at the origin: one cell carrying ``mass``."""
        v = np.zeros(grid.shape)
        v[grid.origin_index] = mass / grid.cell_volume
        return cls(grid, v)

    def nonneg(self) -> "Field":
        """Clamp roundoff negatives; reject anything below the clamp level."""
        lo = self.values.min()
        if lo < NONNEG_CLAMP:
            raise ValueError(f"field has negative values down to {lo:.3e}")
        return Field(self.grid, np.maximum(self.values, 0.0))

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def __add__(self, other):
        return Field(self.grid, self.values + _vals(other, self.grid))

    def __sub__(self, other):
        return Field(self.grid, self.values - _vals(other, self.grid))

    def __mul__(self, other):
        return Field(self.grid, self.values * _vals(other, self.grid))

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return Field(self.grid, -self.values)


def _vals(other, grid):
    if isinstance(other, Field):
        if other.grid != grid:
            raise GridError("grid mismatch")
        return other.values
    return other


@dataclasses.dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coefficients: np.ndarray


def dft(u: Field) -> SpectralField:
    g = u.grid
    coeffs = g.cell_volume * g._phase * np.fft.fftn(u.values)
    return SpectralField(g, coeffs)


def idft(s: SpectralField) -> Field:
    g = s.grid
    vals = np.fft.ifftn(s.coefficients * g._phase) / g.cell_volume
    return Field(g, vals.real)


def idft_multiplier(grid: Grid, multiplier: np.ndarray) -> Field:
    """Field whose transform is ``multiplier`` (sampled on grid frequencies)."""
    return idft(SpectralField(grid, np.broadcast_to(multiplier, grid.shape)))


def inner(u: Field, v: Field) -> float:
    if u.grid != v.grid:
        raise GridError("grid mismatch")
    return float(np.sum(u.values * v.values) * u.grid.cell_volume)


def lp_norm(u: Field | np.ndarray, p: float, grid: Grid | None = None) -> float:
    """Riemann-sum ``L^p`` norm; ``p = inf`` gives the max.

    Exponents in ``(0, 1)`` return the quasi-norm ``(int |u|^p)^(1/p)``.
    """
    if isinstance(u, Field):
        grid, vals = u.grid, u.values
    else:
        vals = np.asarray(u)
    if p == np.inf:
        return float(np.abs(vals).max())
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    a = np.abs(vals)
    if p == 1:
        return float(a.sum() * grid.cell_volume)
    scale = a.max()
    if scale == 0:
        return 0.0
    # factor out the max so large p does not overflow
    return float(scale * (np.sum((a / scale) ** p) * grid.cell_volume) ** (1.0 / p))


def power(u: Field, m: float) -> Field:
    """``sign(u) |u|^m``, i.e. ``u^m`` for nonnegative fields."""
    if m == 1:
        return u
    v = u.values
    return Field(u.grid, np.sign(v) * np.abs(v) ** m)


def convolve(u: Field, v: Field) -> Field:
    if u.grid != v.grid:
        raise GridError("grid mismatch")
    return idft(SpectralField(u.grid, dft(u).coefficients * dft(v).coefficients))


def convolve_direct(u: Field, v: Field) -> Field:
    """O(n^2) circular convolution, the reference for ``convolve`` (1-D/2-D only)."""
    g = u.grid
    if g.size > 64**2:
        raise GridError("direct convolution is only meant for small grids")
    half = g.n // 2
    out = np.zeros(g.shape)
    # out[i] = sum_j v[j] u[i - j + half]: one shifted copy of u per source point
    for j in np.ndindex(*g.shape):
        if v.values[j] != 0.0:
            out += v.values[j] * np.roll(u.values, tuple(jj - half for jj in j), axis=tuple(range(g.dim)))
    return Field(g, out * g.cell_volume)


def mass_outside_central_half(u: Field) -> float:
    """Fraction of |u|-mass lying outside ``[-L/4, L/4)^dim``."""
    g = u.grid
    a = np.abs(u.values)
    total = a.sum()
    if total == 0:
        return 0.0
    q = g.n // 4
    inner_block = a[(slice(q, g.n - q),) * g.dim].sum()
    return float(max(total - inner_block, 0.0) / total)


# ---------------------------------------------------------------- field I/O

_BIN_MAGIC = b"NLDF"


def write_field_csv(u: Field, path) -> None:
    """1-D: ``x,value`` rows. 2-/3-D: ``i,j[,k],value`` rows in C (row-major) order."""
    g = u.grid
    path = Path(path)
    if g.dim == 1:
        data = np.column_stack([g.axis, u.values])
        np.savetxt(path, data, delimiter=",", header="x,value", comments="", fmt="%.17g")
        return
    idx = np.indices(g.shape).reshape(g.dim, -1).T
    header = ",".join("ijk"[: g.dim]) + ",value"
    data = np.column_stack([idx, u.values.ravel()])
    fmt = ["%d"] * g.dim + ["%.17g"]
    with open(path, "w") as fh:
        fh.write(f"# grid dim={g.dim} n={g.n} L={g.side!r}\n")
        np.savetxt(fh, data, delimiter=",", header=header, comments="", fmt=fmt)


def read_field_csv(path, grid: Grid | None = None) -> Field:
    path = Path(path)
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("# grid"):
        meta = dict(kv.split("=") for kv in first[len("# grid"):].split())
        g = Grid(int(meta["dim"]), int(meta["n"]), float(meta["L"]))
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        vals = np.zeros(g.shape)
        vals[tuple(data[:, : g.dim].astype(int).T)] = data[:, g.dim]
        return Field(g, vals)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if grid is None:
        x = data[:, 0]
        h = x[1] - x[0]
        grid = Grid(1, len(x), float(h * len(x)))
    return Field(grid, data[:, 1])


def write_field_bin(u: Field, path) -> None:
    """Header ``NLDF`` + (dim, n) as little-endian int32 + L as float64, then row-major doubles."""
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<iid", g.dim, g.n, g.side))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_field_bin(path) -> Field:
    raw = Path(path).read_bytes()
    if raw[:4] != _BIN_MAGIC:
        raise ValueError(f"{path}: not a field file")
    dim, n, side = struct.unpack("<iid", raw[4:20])
    g = Grid(dim, n, side)
    vals = np.frombuffer(raw[20:], dtype="<f8").reshape(g.shape)
    return Field(g, vals.copy())


def read_field(path, grid: Grid | None = None) -> Field:
    path = Path(path)
    if path.suffix == ".bin":
        return read_field_bin(path)
    return read_field_csv(path, grid)
