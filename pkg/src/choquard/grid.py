"""Periodic grids, real fields and the spectral operators acting on them.

A :class:`Grid` is a uniform lattice on the cube ``[-L/2, L/2)^d`` with ``n``
points per axis.  Fields store their samples in lexicographic (C) order, so
index ``n//2`` along each axis is the coordinate origin.

All derivative operators are Fourier multipliers and all convolutions are
periodic, evaluated with real FFTs and scaled by the cell volume ``h**d``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .errors import FieldFormatError, GridError, GridMismatchError, ZeroFieldError

__all__ = [
    "Grid",
    "Field",
    "make_grid",
    "mass",
    "inner",
    "convolve",
    "laplacian",
    "grad_norm_sq",
    "lp_norm",
    "rearrange_decreasing",
    "recenter",
    "embed",
    "block_mass_map",
    "concentration",
    "dilate",
    "dump_field",
    "load_field",
    "field_to_bytes",
    "field_from_bytes",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice with ``n`` points per axis on a box of side ``L``."""

    dim: int
    n: int
    L: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"invalid-dimension: dim={self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise GridError(f"non-power-of-two: n={self.n} (need a power of two >= 8)")
        if not self.L > 0:
            raise GridError(f"nonpositive-L: L={self.L}")
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def dV(self) -> float:
        return self.h ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """1D coordinates ``-L/2, ..., L/2 - h``."""
        return (np.arange(self.n) - self.n // 2) * self.h

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out.append(self.axis.reshape(shape))
        return tuple(out)

    @cached_property
    def points(self) -> np.ndarray:
        """All grid points as an array of shape ``shape + (dim,)``."""
        return np.stack(np.broadcast_arrays(*self.coords), axis=-1)

    @cached_property
    def r2(self) -> np.ndarray:
        return sum(c * c for c in self.coords) + np.zeros(self.shape)

    @cached_property
    def index_r2(self) -> np.ndarray:
        """Squared distance to the origin in units of ``h**2`` (exact integers)."""
        idx = np.arange(self.n) - self.n // 2
        out = np.zeros(self.shape, dtype=np.int64)
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out = out + (idx * idx).reshape(shape)
        return out

    @cached_property
    def radial_order(self) -> np.ndarray:
        """Flat indices sorted by distance to the origin, ties in index order."""
        return np.argsort(self.index_r2.ravel(), kind="stable")

    @cached_property
    def k2(self) -> np.ndarray:
        """``|k|**2`` on the real-FFT half spectrum."""
        k = 2 * np.pi * sfft.fftfreq(self.n, d=self.h)
        kr = 2 * np.pi * sfft.rfftfreq(self.n, d=self.h)
        out = np.zeros(self.shape[:-1] + (self.n // 2 + 1,))
        for ax in range(self.dim):
            kk = kr if ax == self.dim - 1 else k
            shape = [1] * self.dim
            shape[ax] = kk.size
            out = out + (kk * kk).reshape(shape)
        return out

    @cached_property
    def rfft_weights(self) -> np.ndarray:
        """Multiplicity of each half-spectrum entry in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shape = [1] * self.dim
        shape[-1] = w.size
        return np.broadcast_to(w.reshape(shape), self.k2.shape)

    def rfft(self, a: np.ndarray) -> np.ndarray:
        return sfft.rfftn(a, s=self.shape)

    def irfft(self, a: np.ndarray) -> np.ndarray:
        return sfft.irfftn(a, s=self.shape)

    def kernel_hat(self, kernel: np.ndarray) -> np.ndarray:
        """Transform of a kernel sampled on grid coordinates, origin moved to index 0."""
        return self.rfft(np.fft.ifftshift(kernel)) * self.dV

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def gaussian(self, width: float, m: float = 1.0, center=None) -> "Field":
        """Gaussian ``exp(-|x - c|**2 / (2 width**2))`` scaled to mass ``m``."""
        r2 = self.r2
        if center is not None:
            r2 = sum((c - x0) ** 2 for c, x0 in zip(self.coords, center)) + np.zeros(self.shape)
        u = np.exp(-r2 / (2 * width**2))
        return Field(self, u * np.sqrt(m / (self.dV * np.sum(u * u))))


def make_grid(dim: int, n: int, L: float) -> Grid:
    return Grid(dim, n, L)


class Field:
    """Real samples on a :class:`Grid`.  The value array is read-only."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim == 1 and arr.size == grid.size and grid.dim > 1:
            arr = arr.reshape(grid.shape)
        if arr.shape != grid.shape:
            raise GridMismatchError(f"values of shape {arr.shape} do not fit grid {grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.flags.writeable = False
        self.grid = grid
        self.values = arr

    def __repr__(self):
        return f"Field(grid={self.grid!r}, mass={mass(self):.6g})"

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __abs__(self):
        return Field(self.grid, np.abs(self.values))


def _check_same(a: Field, b: Field):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid-mismatch: {a.grid} vs {b.grid}")


def mass(u: Field) -> float:
    return float(u.grid.dV * np.sum(u.values * u.values))


def inner(a: Field, b: Field) -> float:
    _check_same(a, b)
    return float(a.grid.dV * np.sum(a.values * b.values))


def lp_norm(u: Field, p: float) -> float:
    if np.isinf(p):
        return float(np.max(np.abs(u.values)))
    return float((u.grid.dV * np.sum(np.abs(u.values) ** p)) ** (1.0 / p))


def convolve(kernel: Field, f: Field) -> Field:
    """Periodic convolution ``h**d * sum_y kernel[x - y] f[y]``."""
    _check_same(kernel, f)
    grid = f.grid
    return Field(grid, grid.irfft(grid.kernel_hat(kernel.values) * grid.rfft(f.values)))


def laplacian(f: Field) -> Field:
    grid = f.grid
    return Field(grid, grid.irfft(-grid.k2 * grid.rfft(f.values)))


def _grad_norm_sq_array(grid: Grid, a: np.ndarray) -> float:
    fh = grid.rfft(a)
    s = np.sum(grid.rfft_weights * grid.k2 * (fh.real**2 + fh.imag**2))
    return float(s * grid.dV / grid.size)


def grad_norm_sq(f: Field) -> float:
    """``||grad f||_2**2`` from the Fourier coefficients (Parseval)."""
    return _grad_norm_sq_array(f.grid, f.values)


def rearrange_decreasing(f: Field) -> Field:
    """Symmetric-decreasing rearrangement of ``|f|`` on the lattice.

    The largest values go to the points closest to the origin; equal distances
    are filled in lexicographic index order.
    """
    grid = f.grid
    order = grid.radial_order
    # values taken in radial order are nearly sorted already, which the
    # run-aware stable sort exploits
    vals = -np.sort(-np.abs(f.values).ravel()[order], kind="stable")
    out = np.empty(grid.size)
    out[order] = vals
    return Field(grid, out.reshape(grid.shape))


def _block_width(grid: Grid, block: float = 1.0) -> int:
    return max(1, int(round(block / grid.h)))


def block_mass_map(f: Field, block: float = 1.0) -> np.ndarray:
    """``z -> ||f||_{L2(z + Q)}`` for cubes ``Q`` of edge ``block`` at every grid point.

    The edge is rounded to a whole number of cells.
    """
    grid = f.grid
    w = _block_width(grid, block)
    density = f.values * f.values
    s = ndimage.uniform_filter(density, size=w, mode="wrap") * (w**grid.dim) * grid.dV
    return np.sqrt(np.maximum(s, 0.0))


def concentration(f: Field, block: float = 1.0) -> float:
    """``sup_z ||f||_{L2(z+Q)}`` over cubes of edge ``block`` (unit cubes by default)."""
    return float(np.max(block_mass_map(f, block)))


def recenter(f: Field, block: float = 1.0) -> Field:
    """Cyclic shift moving the maximal unit-cube mass to the origin."""
    if not np.any(f.values):
        raise ZeroFieldError("zero-field: cannot recenter an identically zero field")
    grid = f.grid
    bm = block_mass_map(f, block)
    origin = (grid.n // 2,) * grid.dim
    peak = bm.max()
    if bm[origin] >= peak * (1 - 1e-12):
        return f
    idx = np.unravel_index(int(np.argmax(bm)), bm.shape)
    shift = tuple(o - i for o, i in zip(origin, idx))
    return Field(grid, np.roll(f.values, shift, axis=tuple(range(grid.dim))))


def _interp_matrix(grid: Grid, targets: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation from grid samples to arbitrary 1D targets."""
    n = grid.n
    k = 2 * np.pi * sfft.fftfreq(n, d=grid.h)
    # coefficient of sample j in mode k, coordinates start at -L/2
    x = grid.axis
    E_in = np.exp(-1j * np.outer(k, x)) / n
    E_out = np.exp(1j * np.outer(targets, k))
    return (E_out @ E_in).real


def dilate(f: Field, t: float) -> Field:
    """Mass-preserving dilation ``t**(d/2) f(t x)`` by trigonometric resampling.

    ``t < 1`` spreads the field and ``t > 1`` contracts it.  Points mapped outside
    the box see the periodic extension, so the field should have decayed there.
    """
    grid = f.grid
    M = _interp_matrix(grid, t * grid.axis)
    a = f.values
    for ax in range(grid.dim):
        a = np.moveaxis(np.tensordot(M, a, axes=([1], [ax])), 0, ax)
    return Field(grid, t ** (grid.dim / 2) * a)


def embed(f: Field, factor: int = 2, fill: float = 0.0) -> Field:
    """Place ``f`` at the centre of a box ``factor`` times larger, same spacing."""
    grid = f.grid
    if int(factor) != factor or factor < 1:
        raise ValueError("factor must be a positive integer")
    big = Grid(grid.dim, grid.n * int(factor), grid.L * factor)
    off = (big.n - grid.n) // 2
    out = np.full(big.shape, float(fill))
    out[(slice(off, off + grid.n),) * grid.dim] = f.values
    return Field(big, out)


_MAGIC = b"CHQF"
_VERSION = 1


def field_to_bytes(f: Field) -> bytes:
    g = f.grid
    head = _MAGIC + struct.pack("<IIId", _VERSION, g.dim, g.n, g.L)
    return head + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def field_from_bytes(data: bytes) -> Field:
    if len(data) < 24 or data[:4] != _MAGIC:
        raise FieldFormatError("not a CHQF field dump")
    version, dim, n = struct.unpack("<III", data[4:16])
    if version != _VERSION:
        raise FieldFormatError(f"unsupported CHQF version {version}")
    (L,) = struct.unpack("<d", data[16:24])
    try:
        grid = Grid(dim, n, L)
    except GridError as exc:
        raise FieldFormatError(f"bad CHQF header: {exc}") from exc
    if len(data) != 24 + 8 * grid.size:
        raise FieldFormatError("truncated or oversized CHQF payload")
    vals = np.frombuffer(data, dtype="<f8", offset=24, count=grid.size)
    return Field(grid, vals.reshape(grid.shape))


def dump_field(f: Field, path) -> None:
    """Write a CHQF dump via a temporary file and an atomic rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(field_to_bytes(f))
    os.replace(tmp, path)


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())
