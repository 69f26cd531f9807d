"""The Hartree energy, its gradient and the associated Lagrange multiplier.

With ``K(u) = ||grad u||^2 / 2`` and ``V(u) = 1/4 <u^2, V * u^2>`` the energy is
``E_g(u) = K(u) - g V(u)`` and its L2 gradient is ``-Lap u - g (V * u^2) u``
for symmetric ``V``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import constants
from .errors import AsymmetricPotentialError, GridMismatchError, PotentialError, ZeroMassError
from .grid import Field, Grid, _grad_norm_sq_array, grad_norm_sq, mass
from .potentials import Potential, split_norms

__all__ = [
    "EnergyBreakdown",
    "mean_field",
    "interaction",
    "energy",
    "energy_gradient",
    "el_residual",
    "lagrange_multiplier",
    "LowerBoundCheck",
    "lower_bound_check",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    interaction: float
    total: float
    g: float
    m: float

    @classmethod
    def build(cls, kinetic, interaction, g, m):
        return cls(float(kinetic), float(interaction), float(kinetic - g * interaction), float(g), float(m))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "EnergyBreakdown":
        return cls(**json.loads(text))


def _check(u: Field, p: Potential):
    if u.grid.dim != p.dim:
        raise GridMismatchError(f"grid-mismatch: field is {u.grid.dim}D, potential {p.dim}D")


def _mean_field_array(grid: Grid, p: Potential, a: np.ndarray, which: str = "V") -> np.ndarray:
    """``V * a**2`` (or ``W * a**2``) as an array."""
    khat = p.kernel_hat(grid) if which == "V" else p.kernel_hat_W(grid)
    return grid.irfft(khat * grid.rfft(a * a))


def mean_field(u: Field, p: Potential) -> Field:
    """The self-consistent potential ``V * u^2``."""
    _check(u, p)
    return Field(u.grid, _mean_field_array(u.grid, p, u.values))


def interaction(u: Field, p: Potential) -> float:
    """``1/4 <u^2, V * u^2>``."""
    _check(u, p)
    a = u.values
    phi = _mean_field_array(u.grid, p, a)
    return float(0.25 * u.grid.dV * np.sum(a * a * phi))


def energy(u: Field, g: float, p: Potential) -> EnergyBreakdown:
    if not g > 0:
        raise ValueError(f"coupling g must be positive, got {g}")
    return EnergyBreakdown.build(0.5 * grad_norm_sq(u), interaction(u, p), g, mass(u))


def _require_symmetric(p: Potential):
    if not p.symmetric:
        raise AsymmetricPotentialError(f"asymmetric-potential: {p.name}")


def energy_gradient(u: Field, g: float, p: Potential) -> Field:
    """L2 gradient ``-Lap u - g (V * u^2) u``."""
    _check(u, p)
    _require_symmetric(p)
    grid = u.grid
    a = u.values
    lap = grid.irfft(-grid.k2 * grid.rfft(a))
    return Field(grid, -lap - g * _mean_field_array(grid, p, a) * a)


def el_residual(u: Field, g: float, lam: float, p: Potential) -> Field:
    """``-Lap u + lam u - g (V * u^2) u``."""
    grad = energy_gradient(u, g, p)
    return Field(u.grid, grad.values + lam * u.values)


def lagrange_multiplier(u: Field, g: float, p: Potential) -> float:
    """Multiplier from pairing the Euler--Lagrange equation with ``u``."""
    _check(u, p)
    m = mass(u)
    if m <= 0:
        raise ZeroMassError("zero-mass: multiplier undefined")
    a = u.values
    pair = u.grid.dV * np.sum(a * a * _mean_field_array(u.grid, p, a))
    return float((g * pair - _grad_norm_sq_array(u.grid, a)) / m)


@dataclass(frozen=True)
class LowerBoundCheck:
    """Both sides of the coercivity bound and whether its smallness condition holds."""

    lhs: float
    rhs: float
    smallness: float
    condition_met: bool

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs


def lower_bound_check(u: Field, g: float, p: Potential, R: float) -> LowerBoundCheck:
    """Check ``E_g(u) >= ||grad u||^2/4 - (g/4) ||V_{R,1}||_inf m^2``.

    ``V_{R,1}`` is ``V`` restricted to the ball of radius ``R`` and the bounded
    part is estimated with exponent ``q = inf``.  The tail ``V_{R,2}`` is absorbed
    into the kinetic term when ``g * C * m * ||V_{R,2}||_{d/2} < 1/4``, with ``C``
    the Gagliardo--Nirenberg constant scaled by the 1/4 in front of the
    interaction.  The result reports whether that condition was met instead of
    raising.
    """
    grid = u.grid
    if grid.dim not in (2, 3):
        raise PotentialError("lower_bound_check needs d = 2 or 3")
    _check(u, p)
    m = mass(u)
    V = p.sample(grid).values
    inside = grid.r2 < R * R
    v1_sup = float(np.max(np.abs(V[inside]))) if np.any(inside) else 0.0
    _, tail = split_norms(p, grid, R)
    C = 0.25 * constants.gn_constant(grid.dim)
    smallness = g * C * m * tail
    e = energy(u, g, p)
    grad2 = 2.0 * e.kinetic
    rhs = 0.25 * grad2 - 0.25 * g * v1_sup * m * m
    return LowerBoundCheck(e.total, float(rhs), float(smallness), bool(smallness < 0.25))
