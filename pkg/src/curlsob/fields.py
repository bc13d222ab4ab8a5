"""Periodic grids and immutable field containers.

Fields are sampled on the cube [-L, L)^3 with ``n`` points per axis.  Values
are stored component-first, ``(ncomp, n, n, n)`` for vector and spinor
fields and ``(n, n, n)`` for scalars, in C order so that z varies fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Cubic periodic lattice with ``n`` points per axis on [-L, L)."""

    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError("n must be even ≥ 8")
        if not self.L > 0 or not np.isfinite(self.L):
            raise ValueError("box half-width L must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** 3

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> np.ndarray:
        """Site coordinates, shape ``(3, n, n, n)``."""
        x = self.axis
        out = np.stack(np.meshgrid(x, x, x, indexing="ij"))
        out.flags.writeable = False
        return out

    @cached_property
    def r2(self) -> np.ndarray:
        out = np.sum(self.coords**2, axis=0)
        out.flags.writeable = False
        return out

    def frequencies(self) -> np.ndarray:
        """Angular wavenumbers per axis, the set {-n/2, ..., n/2-1}·π/L in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n) * (np.pi / self.L)


def make_grid(n: int, L: float) -> Grid:
    return Grid(n, L)


class _Field:
    ncomp: int = 0  # 0 means scalar layout
    dtype: type = np.float64
    kind: str = ""

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=self.dtype, copy=True)
        expected = grid.shape if self.ncomp == 0 else (self.ncomp, *grid.shape)
        if arr.shape != expected:
            raise ValueError(f"{self.kind} field on n={grid.n} needs shape {expected}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{self.kind} field contains non-finite values")
        arr.flags.writeable = False
        self._grid = grid
        self._values = arr

    @property
    def grid(self) -> Grid:
        return self._grid

    @property
    def values(self) -> np.ndarray:
        return self._values

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean magnitude."""
        if self.ncomp == 0:
            return np.abs(self._values)
        return np.sqrt(np.sum(np.abs(self._values) ** 2, axis=0))

    def _check(self, other):
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {self.kind} field with {type(other).__name__}")
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return type(self)(self.grid, self._values + other.values)

    def __sub__(self, other):
        self._check(other)
        return type(self)(self.grid, self._values - other.values)

    def __neg__(self):
        return type(self)(self.grid, -self._values)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return type(self)(self.grid, self._values * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.grid.n}, L={self.grid.L})"


class ScalarField(_Field):
    kind = "scalar"


class VectorField(_Field):
    ncomp = 3
    kind = "vector"


class SpinorField(_Field):
    ncomp = 2
    dtype = np.complex128
    kind = "spinor"


def zeros(kind: type, grid: Grid):
    shape = grid.shape if kind.ncomp == 0 else (kind.ncomp, *grid.shape)
    return kind(grid, np.zeros(shape, dtype=kind.dtype))


def constant(grid: Grid, value) -> _Field:
    """Constant field; the field kind is inferred from ``value``."""
    value = np.asarray(value)
    if value.ndim == 0:
        return ScalarField(grid, np.full(grid.shape, float(value)))
    if value.shape == (3,) and not np.iscomplexobj(value):
        return VectorField(grid, np.broadcast_to(value.reshape(3, 1, 1, 1), (3, *grid.shape)))
    if value.shape == (2,):
        v = value.astype(complex)
        return SpinorField(grid, np.broadcast_to(v.reshape(2, 1, 1, 1), (2, *grid.shape)))
    raise ValueError(f"cannot build a constant field from shape {value.shape}")


def lp_norm(f: _Field, p: float) -> float:
    """Riemann-sum L^p norm (Σ |f|^p h³)^{1/p}; pointwise Euclidean magnitude for
    vector and spinor fields, max for p = ∞."""
    if not p >= 1:
        raise ValueError("p must be ≥ 1")
    mag = f.magnitude()
    if np.isinf(p):
        return float(mag.max())
    # np.sum reduces pairwise in a fixed order, so the result is deterministic
    return float((np.sum(mag**p) * f.grid.cell_volume) ** (1.0 / p))


def pointwise_norm_power(f: _Field, p: float) -> float:
    """∫ |f|^p dx as a Riemann sum."""
    return float(np.sum(f.magnitude() ** p) * f.grid.cell_volume)


def mean(f: _Field):
    if f.ncomp == 0:
        return float(f.values.mean())
    return f.values.reshape(f.ncomp, -1).mean(axis=1)
