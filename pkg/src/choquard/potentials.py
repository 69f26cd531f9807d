"""Interaction potentials ``V`` together with ``W = x . grad V``.

Every potential carries an analytic ``W`` so that virial-type quantities never
involve numerical differentiation.  Kernels sampled on a grid are cached per
potential instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import NoSignChangeError, NonDifferentiablePotentialError, PotentialError
from .grid import Field, Grid

__all__ = [
    "Potential",
    "ion_atom",
    "gaussian_potential",
    "step_1d",
    "delta_cell",
    "constant_potential",
    "table_potential",
    "load_table_potential",
    "eval_F",
    "radial_F",
    "find_rstar",
    "split_norms",
    "parse_potential",
]


def _radius(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(x * x, axis=-1))


@dataclass(frozen=True, eq=False)
class Potential:
    """An interaction potential on ``R^dim``.

    ``V`` and ``W`` take points of shape ``(..., dim)``.  Radial potentials also
    expose ``profile_V``/``profile_W`` as functions of the radius.
    """

    name: str
    dim: int
    V: Callable
    W: Callable
    symmetric: bool = True
    radial: bool = True
    nonincreasing: bool = True
    test_only: bool = False
    differentiable: bool = True
    width: float | None = None
    params: dict = field(default_factory=dict)
    profile_V: Callable | None = None
    profile_W: Callable | None = None
    sampler: Callable | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.name}({args}, dim={self.dim})"

    @property
    def label(self) -> str:
        return repr(self)

    def require_differentiable(self):
        if not self.differentiable:
            raise NonDifferentiablePotentialError(
                f"non-differentiable-potential: {self.name} has no usable W = x.grad V"
            )

    def _check_grid(self, grid: Grid):
        if grid.dim != self.dim:
            raise PotentialError(f"potential is {self.dim}D but grid is {grid.dim}D")

    def sample(self, grid: Grid) -> Field:
        """``V`` at the grid points (the convolution kernel)."""
        self._check_grid(grid)
        key = ("V", grid)
        if key not in self._cache:
            if self.sampler is not None:
                vals = self.sampler(grid)
            else:
                vals = self.V(grid.points)
            self._cache[key] = Field(grid, vals)
        return self._cache[key]

    def sample_W(self, grid: Grid) -> Field:
        self.require_differentiable()
        self._check_grid(grid)
        key = ("W", grid)
        if key not in self._cache:
            self._cache[key] = Field(grid, self.W(grid.points))
        return self._cache[key]

    def kernel_hat(self, grid: Grid) -> np.ndarray:
        key = ("Vhat", grid)
        if key not in self._cache:
            self._cache[key] = grid.kernel_hat(self.sample(grid).values)
        return self._cache[key]

    def kernel_hat_W(self, grid: Grid) -> np.ndarray:
        key = ("What", grid)
        if key not in self._cache:
            self._cache[key] = grid.kernel_hat(self.sample_W(grid).values)
        return self._cache[key]

    def positive_part_hat(self, grid: Grid) -> np.ndarray:
        key = ("V+hat", grid)
        if key not in self._cache:
            self._cache[key] = grid.kernel_hat(np.maximum(self.sample(grid).values, 0.0))
        return self._cache[key]

    def dilated_kernel_hat(self, grid: Grid, scale: float, which: str = "V") -> np.ndarray:
        """Transform of ``V(x / scale)`` (or ``W(x / scale)``) sampled on the grid."""
        self._check_grid(grid)
        if which == "W":
            self.require_differentiable()
            vals = self.W(grid.points / scale)
        else:
            if self.sampler is not None:
                raise PotentialError(f"{self.name} cannot be dilated")
            vals = self.V(grid.points / scale)
        return grid.kernel_hat(vals)


def _radial(name, dim, fV, fW, **kw) -> Potential:
    return Potential(
        name=name,
        dim=dim,
        V=lambda x: fV(_radius(x)),
        W=lambda x: fW(_radius(x)),
        profile_V=fV,
        profile_W=fW,
        **kw,
    )


def _check_dim(dim):
    if dim not in (1, 2, 3):
        raise PotentialError(f"invalid dimension {dim}")


def ion_atom(b: float, dim: int) -> Potential:
    """Regularised ion--atom interaction ``1 / (|x|^2 + b^2)^2``."""
    _check_dim(dim)
    if not b > 0:
        raise PotentialError(f"nonpositive-b: b={b}")
    b2 = float(b) ** 2

    def fV(r):
        r = np.asarray(r, dtype=float)
        return 1.0 / (r * r + b2) ** 2

    def fW(r):
        r = np.asarray(r, dtype=float)
        return -4.0 * r * r / (r * r + b2) ** 3

    return _radial("ion_atom", dim, fV, fW, width=float(b), params={"b": float(b)})


def gaussian_potential(a: float, s: float, dim: int) -> Potential:
    """``a exp(-|x|^2 / (2 s^2))``."""
    _check_dim(dim)
    if not s > 0:
        raise PotentialError(f"nonpositive-s: s={s}")
    a = float(a)
    s2 = float(s) ** 2

    def fV(r):
        r = np.asarray(r, dtype=float)
        return a * np.exp(-r * r / (2 * s2))

    def fW(r):
        r = np.asarray(r, dtype=float)
        return -(r * r / s2) * fV(r)

    return _radial(
        "gaussian",
        dim,
        fV,
        fW,
        nonincreasing=a > 0,
        width=float(s),
        params={"a": a, "s": float(s)},
    )


def step_1d(eps: float) -> Potential:
    """1D step potential: ``1`` on ``|x| <= eps``, ``-2`` up to ``|x| < 1``, then ``0``."""
    if not 0 < eps < 0.25:
        raise PotentialError(f"eps-out-of-range: eps={eps} not in (0, 1/4)")
    eps = float(eps)

    def fV(r):
        r = np.abs(np.asarray(r, dtype=float))
        return np.where(r <= eps, 1.0, np.where(r < 1.0, -2.0, 0.0))

    def fW(r):
        return np.zeros_like(np.asarray(r, dtype=float))

    return _radial(
        "step_1d",
        1,
        fV,
        fW,
        nonincreasing=False,
        differentiable=False,
        width=1.0,
        params={"eps": eps},
    )


def delta_cell(dim: int) -> Potential:
    """Lattice delta: ``1/h**d`` on the origin cell.  Test fixture only."""
    _check_dim(dim)

    def sampler(grid: Grid):
        out = np.zeros(grid.shape)
        out[(grid.n // 2,) * grid.dim] = 1.0 / grid.dV
        return out

    def fV(r):
        r = np.asarray(r, dtype=float)
        return np.where(r == 0, np.inf, 0.0)

    return _radial(
        "delta_cell",
        dim,
        fV,
        lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        test_only=True,
        differentiable=False,
        sampler=sampler,
        params={},
    )


def constant_potential(c: float, dim: int) -> Potential:
    """``V == c``.  Test fixture (not integrable on the whole space)."""
    _check_dim(dim)
    c = float(c)
    return _radial(
        "constant",
        dim,
        lambda r: np.full(np.shape(r), c),
        lambda r: np.zeros(np.shape(r)),
        test_only=True,
        nonincreasing=True,
        width=1.0,
        params={"c": c},
    )


def table_potential(r, V, W, dim: int, name: str = "table") -> Potential:
    """Radial potential interpolated linearly from tabulated ``(r, V(r), W(r))``.

    Values beyond the last radius are zero.
    """
    _check_dim(dim)
    r = np.asarray(r, dtype=float)
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    if r.ndim != 1 or r.size < 2 or np.any(np.diff(r) <= 0):
        raise PotentialError("table radii must be strictly increasing with at least two rows")

    def fV(x):
        return np.interp(np.asarray(x, dtype=float), r, V, right=0.0)

    def fW(x):
        return np.interp(np.asarray(x, dtype=float), r, W, right=0.0)

    return _radial(
        name,
        dim,
        fV,
        fW,
        nonincreasing=bool(np.all(np.diff(V) <= 0)),
        width=float(r[np.argmax(np.abs(V) < 0.5 * np.abs(V[0]))] or r[-1] / 10),
        params={"rows": int(r.size)},
    )


def load_table_potential(path, dim: int) -> Potential:
    """Read whitespace-separated ``r V W`` rows; ``#`` starts a comment."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 3:
        raise PotentialError(f"{path}: expected 3 columns (r, V, W), got {data.shape[1]}")
    return table_potential(data[:, 0], data[:, 1], data[:, 2], dim, name=f"table:{path}")


def eval_F(p: Potential, x) -> np.ndarray:
    """``F = V/2 + W/4`` at points ``x`` of shape ``(..., dim)``."""
    p.require_differentiable()
    x = np.asarray(x, dtype=float)
    if p.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return 0.5 * p.V(x) + 0.25 * p.W(x)


def radial_F(p: Potential, r) -> np.ndarray:
    p.require_differentiable()
    return 0.5 * p.profile_V(r) + 0.25 * p.profile_W(r)


def find_rstar(p: Potential, r_max: float | None = None, samples: int = 4001) -> float:
    """Radius where ``V + W/2`` changes sign from positive to negative.

    The sign pattern (positive before the root, non-positive after it) is
    checked on ``samples`` equispaced radii before the root is bisected.
    """
    p.require_differentiable()
    if not p.radial or p.profile_V is None:
        raise NoSignChangeError(f"{p.name} is not radial")
    if r_max is None:
        r_max = 10.0 * (p.width or 1.0)

    def f(r):
        return float(p.profile_V(r) + 0.5 * p.profile_W(r))

    if not f(0.0) > 0:
        raise NoSignChangeError(f"no-sign-change: V(0) + W(0)/2 = {f(0.0)} is not positive")
    rs = np.linspace(0.0, r_max, samples)
    vals = p.profile_V(rs) + 0.5 * p.profile_W(rs)
    neg = np.nonzero(vals < 0)[0]
    if neg.size == 0:
        raise NoSignChangeError(f"no-sign-change: V + W/2 stays positive on (0, {r_max}]")
    first = neg[0]
    if np.any(vals[first:] > 0):
        raise NoSignChangeError("no-sign-change: V + W/2 changes sign more than once")
    a, b = rs[first - 1], rs[first]
    fa, fb = f(a), f(b)
    if fa * fb >= 0:  # scalar and vector evaluations rounded apart at a root
        return float(a if abs(fa) <= abs(fb) else b)
    return float(optimize.brentq(f, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps))


def split_norms(p: Potential, grid: Grid, R: float) -> tuple[float, float]:
    """``(||chi_{B_R} V||_1, ||V - chi_{B_R} V||_q)`` with ``q = max(1, d/2)``."""
    if not R > 0:
        raise PotentialError(f"R must be positive, got {R}")
    V = p.sample(grid).values
    inside = grid.r2 < R * R
    n1 = float(grid.dV * np.sum(np.abs(V[inside])))
    q = max(1.0, grid.dim / 2)
    outer = np.abs(V[~inside])
    n2 = float((grid.dV * np.sum(outer**q)) ** (1 / q))
    return n1, n2


def parse_potential(spec: str, dim: int) -> Potential:
    """Build a potential from ``name:key=value,...`` (e.g. ``ion_atom:b=1``)."""
    name, _, rest = spec.partition(":")
    kw = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise PotentialError(f"malformed potential parameter {item!r}")
            kw[key.strip()] = val.strip()
    name = name.strip()
    builders = {
        "ion_atom": lambda: ion_atom(float(kw.pop("b", 1.0)), dim),
        "gaussian": lambda: gaussian_potential(float(kw.pop("a", 1.0)), float(kw.pop("s", 1.0)), dim),
        "step_1d": lambda: step_1d(float(kw.pop("eps", 0.1))),
        "delta_cell": lambda: delta_cell(dim),
        "constant": lambda: constant_potential(float(kw.pop("c", 0.0)), dim),
        "table": lambda: load_table_potential(kw.pop("path"), dim),
    }
    if name not in builders:
        raise PotentialError(f"unknown potential {name!r}")
    if name == "step_1d" and dim != 1:
        raise PotentialError("step_1d is one-dimensional")
    pot = builders[name]()
    if kw:
        raise PotentialError(f"unknown parameters for {name}: {sorted(kw)}")
    return pot
