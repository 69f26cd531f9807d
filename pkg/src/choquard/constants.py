"""Functional-inequality constants used by the coercivity and threshold estimates.

Conventions::

    ||u||_6^2            <= C_S ||grad u||_2^2                 (d = 3)
    ||u||_{2d/(d-1)}^4   <= C_GN ||grad u||_2^2 ||u||_2^2      (d = 2, 3)
    ||u||_4^4            <= C_4 ||grad u||_2^3 ||u||_2         (d = 3)

In 3D the sharp Sobolev constant is known in closed form and the other two
follow from Hoelder's inequality.  In 2D the constant is estimated by
maximising the quotient over trial fields and inflated by a safety margin.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .grid import Grid, _grad_norm_sq_array

SAFETY_MARGIN = 1.10

__all__ = [
    "SAFETY_MARGIN",
    "sobolev_constant",
    "gn_constant",
    "gn4_constant",
    "gn_quotient",
    "estimate_gn_constant",
]


def sobolev_constant() -> float:
    """Sharp 3D constant ``1 / (3 (pi/2)^(4/3))``."""
    return 1.0 / (3.0 * (np.pi / 2.0) ** (4.0 / 3.0))


def gn_quotient(grid: Grid, a: np.ndarray) -> float:
    """``||u||_p^4 / (||grad u||^2 ||u||^2)`` with ``p = 2d/(d-1)`` on the grid."""
    d = grid.dim
    p = 2 * d / (d - 1)
    lp4 = (grid.dV * np.sum(np.abs(a) ** p)) ** (4 / p)
    return float(lp4 / (_grad_norm_sq_array(grid, a) * grid.dV * np.sum(a * a)))


def _petviashvili_2d(grid: Grid, iters: int = 400) -> np.ndarray:
    """Ground state of ``-Lap u + u = u^3``, the maximiser of the 2D quotient."""
    u = np.exp(-grid.r2 / 2.0) * 2.0
    sym = 1.0 + grid.k2
    for _ in range(iters):
        n3 = grid.rfft(u**3)
        uh = grid.rfft(u)
        M = np.sum(grid.rfft_weights * sym * np.abs(uh) ** 2) / np.sum(
            grid.rfft_weights * (np.conj(uh) * n3).real
        )
        new = grid.irfft(M**1.5 * n3 / sym)
        if np.max(np.abs(new - u)) < 1e-13 * np.max(np.abs(u)):
            u = new
            break
        u = new
    return u


def estimate_gn_constant(dim: int, n: int = 64, L: float = 24.0, seed: int = 0) -> float:
    """Largest quotient over Gaussians, smoothed random fields and an optimised
    trial state, times :data:`SAFETY_MARGIN`."""
    if dim not in (2, 3):
        raise ValueError("the constant is defined for d = 2, 3")
    grid = Grid(dim, n, L)
    best = 0.0
    for w in np.geomspace(0.8, 3.0, 8):
        best = max(best, gn_quotient(grid, np.exp(-grid.r2 / (2 * w * w))))
    rng = np.random.default_rng(seed)
    for _ in range(8):
        noise = rng.standard_normal(grid.shape)
        smooth = grid.irfft(grid.rfft(noise) * np.exp(-grid.k2))
        best = max(best, gn_quotient(grid, smooth))
    if dim == 2:
        best = max(best, gn_quotient(grid, _petviashvili_2d(grid)))
    return SAFETY_MARGIN * best


@lru_cache(maxsize=None)
def gn_constant(dim: int) -> float:
    if dim == 3:
        return sobolev_constant()
    return estimate_gn_constant(dim)


def gn4_constant() -> float:
    return sobolev_constant() ** 1.5
