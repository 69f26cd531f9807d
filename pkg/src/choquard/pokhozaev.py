"""Pokhozaev identity residuals and the 2D pairing with ``F = V/2 + W/4``.

For a critical point ``-Lap u + lam u = g (V * u^2) u`` with ``W = x . grad V``:

    (d-2)/2 ||grad u||^2 + (d/2) lam ||u||^2 = (g/4) <u^2, W * u^2> + (d/2) g <u^2, V * u^2>

Combined with the pairing of the equation with ``u`` this gives the virial
relation ``||grad u||^2 = -(g/4) <u^2, W * u^2>`` in every dimension.  In 2D
the identity says ``<u^2, F * u^2> = 0`` for a critical point at ``g``, so a
strictly positive pairing rules such points out.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .energy import _mean_field_array
from .errors import DimensionMismatchError, GridMismatchError
from .grid import Field, _grad_norm_sq_array, mass, rearrange_decreasing
from .potentials import Potential, find_rstar

__all__ = [
    "PokhozaevReport",
    "pokhozaev_residual",
    "virial_residual",
    "two_d_F_pairing",
    "AutocorrelationReport",
    "autocorrelation",
    "autocorrelation_monotone_check",
]


@dataclass(frozen=True)
class PokhozaevReport:
    lhs: float
    rhs: float
    relative_residual: float
    kinetic_term: float
    multiplier_term: float
    w_term: float
    v_term: float
    nonnegative: bool

    @property
    def components(self) -> tuple[float, float, float, float]:
        return (self.kinetic_term, self.multiplier_term, self.w_term, self.v_term)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _pairings(u: Field, p: Potential):
    if u.grid.dim != p.dim:
        raise GridMismatchError(f"grid-mismatch: field is {u.grid.dim}D, potential {p.dim}D")
    p.require_differentiable()
    grid = u.grid
    a = u.values
    dens = a * a
    pv = grid.dV * float(np.sum(dens * _mean_field_array(grid, p, a, "V")))
    pw = grid.dV * float(np.sum(dens * _mean_field_array(grid, p, a, "W")))
    return _grad_norm_sq_array(grid, a), pv, pw


def pokhozaev_residual(u: Field, lam: float, g: float, p: Potential) -> PokhozaevReport:
    """All four terms of the identity and ``|lhs - rhs| / (1 + max |term|)``.

    ``nonnegative`` records whether ``u >= 0`` (up to rounding), the setting in
    which the identity is guaranteed for general critical points.
    """
    if not p.symmetric:
        from .errors import AsymmetricPotentialError

        raise AsymmetricPotentialError(f"asymmetric-potential: {p.name}")
    d = u.grid.dim
    grad2, pv, pw = _pairings(u, p)
    t1 = 0.5 * (d - 2) * grad2
    t2 = 0.5 * d * lam * mass(u)
    t3 = 0.25 * g * pw
    t4 = 0.5 * d * g * pv
    lhs, rhs = t1 + t2, t3 + t4
    scale = 1.0 + max(abs(t1), abs(t2), abs(t3), abs(t4))
    a = u.values
    nonneg = bool(np.min(a) >= -1e-8 * max(np.max(np.abs(a)), 1e-300))
    return PokhozaevReport(lhs, rhs, abs(lhs - rhs) / scale, t1, t2, t3, t4, nonneg)


def virial_residual(u: Field, g: float, p: Potential) -> tuple[float, float, float]:
    """``(||grad u||^2, -(g/4) <u^2, W * u^2>, relative difference)``."""
    grad2, _, pw = _pairings(u, p)
    rhs = -0.25 * g * pw
    return grad2, rhs, abs(grad2 - rhs) / max(abs(grad2), abs(rhs), 1e-300)


def two_d_F_pairing(u: Field, p: Potential) -> float:
    """``<u^2, F * u^2>`` with ``F = V/2 + W/4`` (2D, radial potentials)."""
    if u.grid.dim != 2 or p.dim != 2:
        raise DimensionMismatchError("dimension-mismatch: the F pairing is two-dimensional")
    p.require_differentiable()
    find_rstar(p)
    grid = u.grid
    a = u.values
    dens = a * a
    Fhat = 0.5 * p.kernel_hat(grid) + 0.25 * p.kernel_hat_W(grid)
    conv = grid.irfft(Fhat * grid.rfft(dens))
    return float(grid.dV * np.sum(dens * conv))


def autocorrelation(u: Field) -> np.ndarray:
    """``h = u^2 * u^2`` on the doubled lattice, without periodic wrap-around.

    Returned with the zero shift at index ``n`` along every axis.
    """
    grid = u.grid
    dens = u.values * u.values
    shape = tuple(2 * s for s in dens.shape)
    axes = tuple(range(dens.ndim))
    fh = np.fft.rfftn(dens, s=shape, axes=axes)
    h = np.fft.irfftn(fh * np.conj(fh), s=shape, axes=axes) * grid.dV
    return np.fft.fftshift(h)


@dataclass(frozen=True)
class AutocorrelationReport:
    radii: np.ndarray
    shell_means: np.ndarray
    max_increase: float
    slack: float
    monotone: bool


def autocorrelation_monotone_check(u: Field, rel_slack: float = 1e-8) -> AutocorrelationReport:
    """Rearrange ``u``, form ``h = u^2 * u^2`` and test its shell averages.

    Shells have the width of one lattice cell and reach out to radius ``L``,
    where the doubled lattice still contains complete spheres.
    """
    v = rearrange_decreasing(u)
    grid = u.grid
    h = autocorrelation(v)
    n2 = 2 * grid.n
    idx = np.arange(n2) - grid.n
    r2 = np.zeros(h.shape, dtype=np.int64)
    for ax in range(grid.dim):
        sh = [1] * grid.dim
        sh[ax] = n2
        r2 = r2 + (idx.reshape(sh) ** 2)
    r = np.sqrt(r2.astype(float))
    keep = r <= grid.n
    bins = np.floor(r[keep] + 0.5).astype(int)
    counts = np.bincount(bins)
    sums = np.bincount(bins, weights=h[keep])
    ok = counts > 0
    means = sums[ok] / counts[ok]
    radii = np.nonzero(ok)[0] * grid.h
    inc = float(np.max(np.diff(means), initial=0.0))
    slack = rel_slack * float(np.max(h))
    return AutocorrelationReport(radii, means, inc, slack, bool(inc <= slack))
