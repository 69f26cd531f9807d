"""Lowest eigenpair of the linearized operator ``H = -Lap/2 - (g/2) V * u^2``.

The operator is applied matrix-free (spectral Laplacian plus a multiplier).
For a minimizer ``u`` with multiplier ``lam`` one has ``H u = -(lam/2) u``, so
``u`` is the natural start vector; the restarted Lanczos iteration then only
has to confirm that no lower eigenvalue exists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .energy import _mean_field_array, energy
from .errors import DimensionMismatchError, GridMismatchError, NoConvergenceError
from .grid import Field, Grid, mass
from .potentials import Potential

__all__ = [
    "EigenResult",
    "Hamiltonian",
    "lowest_eigenpair",
    "dense_lowest_eigenpair",
    "rayleigh_quotient",
    "EjBound",
    "check_ej_bound",
    "clr_integral",
]

EIG_TOL = 1e-8


class Hamiltonian:
    """``psi -> -Lap psi / 2 - (g/2) (V * u^2) psi`` on one grid."""

    def __init__(self, u: Field, g: float, p: Potential):
        if u.grid.dim != p.dim:
            raise GridMismatchError(f"grid-mismatch: field is {u.grid.dim}D, potential {p.dim}D")
        self.grid = u.grid
        self.g = float(g)
        self.multiplier = -0.5 * g * _mean_field_array(u.grid, p, u.values)

    def apply(self, a: np.ndarray) -> np.ndarray:
        grid = self.grid
        a = a.reshape(grid.shape)
        return 0.5 * grid.irfft(grid.k2 * grid.rfft(a)) + self.multiplier * a

    def dense(self) -> np.ndarray:
        """Full matrix in the Euclidean basis of grid values (small grids only)."""
        N = self.grid.size
        if N > 4096:
            raise ValueError(f"dense operator limited to 4096 points, got {N}")
        cols = np.empty((N, N))
        e = np.zeros(N)
        for j in range(N):
            e[j] = 1.0
            cols[:, j] = self.apply(e).ravel()
            e[j] = 0.0
        return 0.5 * (cols + cols.T)


@dataclass
class EigenResult:
    eigenvalue: float
    eigenfunction: Field
    rayleigh_residual: float
    iterations: int = 0

    @property
    def value(self) -> float:
        return self.eigenvalue

    def to_dict(self) -> dict:
        return {
            "eigenvalue": self.eigenvalue,
            "rayleigh_residual": self.rayleigh_residual,
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _as_field(grid: Grid, x: np.ndarray) -> Field:
    """Euclidean unit vector -> field of unit L2 mass, positive on average."""
    a = x.reshape(grid.shape) / np.sqrt(grid.dV)
    if np.sum(a) < 0:
        a = -a
    return Field(grid, a)


def _lanczos_cycle(op, v0: np.ndarray, k: int):
    """``k`` Lanczos steps with full reorthogonalization; returns lowest Ritz pair."""
    N = v0.size
    k = min(k, N)
    Q = np.empty((k, N))
    alpha = np.zeros(k)
    beta = np.zeros(k)
    q = v0 / np.linalg.norm(v0)
    m = k
    for j in range(k):
        Q[j] = q
        w = op(q)
        alpha[j] = q @ w
        w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
        w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
        b = np.linalg.norm(w)
        if j + 1 < k:
            if b < 1e-14 * max(1.0, abs(alpha[j])):
                m = j + 1
                break
            beta[j] = b
            q = w / b
    T = np.diag(alpha[:m]) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
    vals, vecs = np.linalg.eigh(T)
    x = Q[:m].T @ vecs[:, 0]
    return vals[0], x / np.linalg.norm(x)


def lowest_eigenpair(
    u: Field,
    g: float,
    p: Potential,
    eig_tol: float = EIG_TOL,
    krylov: int = 60,
    max_restarts: int = 500,
    start: np.ndarray | None = None,
    seed: int = 0,
) -> EigenResult:
    """Smallest eigenvalue of ``H`` by explicitly restarted Lanczos.

    Each cycle builds at most ``krylov`` vectors and restarts from the lowest
    Ritz vector.  The start vector is ``|u|`` plus a little seeded noise (or
    ``start``).  Converged when ``||H psi - e psi||_2 <= eig_tol`` in the L2 norm
    of the grid.
    """
    H = Hamiltonian(u, g, p)
    grid = H.grid
    op = lambda x: H.apply(x).ravel()  # noqa: E731
    rng = np.random.default_rng(seed)
    if start is not None:
        x = np.asarray(start, dtype=float).ravel().copy()
    else:
        x = np.abs(u.values).ravel().copy()
        if not np.any(x):
            x = np.ones(grid.size)
    x /= np.linalg.norm(x)
    x += 1e-6 * rng.standard_normal(grid.size) / np.sqrt(grid.size)
    for it in range(1, max_restarts + 1):
        theta, x = _lanczos_cycle(op, x, krylov)
        r = op(x) - theta * x
        # Euclidean residual of a unit vector equals the L2 residual of the field
        res = float(np.linalg.norm(r))
        if res <= eig_tol:
            return EigenResult(float(theta), _as_field(grid, x), res, it)
    raise NoConvergenceError(f"no-convergence: Lanczos residual {res:.2e} after {max_restarts} restarts")


def dense_lowest_eigenpair(u: Field, g: float, p: Potential) -> EigenResult:
    """Reference answer from full diagonalization (``n**d <= 4096``)."""
    H = Hamiltonian(u, g, p)
    vals, vecs = np.linalg.eigh(H.dense())
    x = vecs[:, 0]
    res = float(np.linalg.norm(H.apply(x).ravel() - vals[0] * x))
    return EigenResult(float(vals[0]), _as_field(H.grid, x), res, 1)


def rayleigh_quotient(psi: Field, u: Field, g: float, p: Potential) -> float:
    """``S(psi) = <psi, H psi> / ||psi||^2``."""
    H = Hamiltonian(u, g, p)
    a = psi.values
    return float(np.sum(a * H.apply(a)) / np.sum(a * a))


@dataclass(frozen=True)
class EjBound:
    eigenvalue: float
    trial_value: float
    energy_per_mass: float
    holds: bool

    def to_dict(self) -> dict:
        return {
            "eigenvalue": self.eigenvalue,
            "trial_value": self.trial_value,
            "energy_per_mass": self.energy_per_mass,
            "holds": self.holds,
        }


def check_ej_bound(u: Field, g: float, p: Potential, e: float | None = None, eig_tol: float = EIG_TOL) -> EjBound:
    """Lowest eigenvalue of ``H`` against ``e(g, m) / m``.

    The chain is ``e_0 <= S(u / sqrt(m)) <= e(g, m) / m``; ``e`` defaults to the
    energy of ``u``.  ``holds`` is ``e_0 < e/m + 1e-8``.
    """
    m = mass(u)
    if e is None:
        e = energy(u, g, p).total
    eig = lowest_eigenpair(u, g, p, eig_tol=eig_tol)
    trial = rayleigh_quotient(u, u, g, p)
    bound = e / m
    return EjBound(eig.eigenvalue, trial, bound, bool(eig.eigenvalue < bound + 1e-8))


def clr_integral(u: Field, p: Potential) -> float:
    """``int (V_+ * u^2)^{3/2} dx``, the non-vanishing witness."""
    grid = u.grid
    if grid.dim != 3 or p.dim != 3:
        raise DimensionMismatchError("dimension-mismatch: the witness is defined for d = 3")
    a = u.values
    phi = grid.irfft(p.positive_part_hat(grid) * grid.rfft(a * a))
    return float(grid.dV * np.sum(np.maximum(phi, 0.0) ** 1.5))
