"""Quick invariant suites behind ``choquard selftest``.

Each suite returns ``(ok, detail)``.  The default set runs in a few seconds;
``full=True`` adds a coarse 3D bisection.
"""

from __future__ import annotations

import tempfile
import time
from pathlib import Path

import numpy as np

from .energy import energy, interaction
from .grid import Field, Grid, grad_norm_sq, mass, rearrange_decreasing, recenter
from .groundstate import MinimizeOptions, minimize_mass
from .pokhozaev import autocorrelation_monotone_check, pokhozaev_residual
from .potentials import delta_cell, find_rstar, gaussian_potential, ion_atom


def _fft_vs_direct():
    rng = np.random.default_rng(0)
    worst = 0.0
    for dim, n, L in [(1, 128, 12.0), (2, 32, 8.0)]:
        grid = Grid(dim, n, L)
        p = gaussian_potential(1.0, 1.0, dim)
        a = rng.normal(size=grid.shape) * np.exp(-grid.r2 / 4)
        u = Field(grid, a)
        dens = (a * a).ravel()
        pts = grid.points.reshape(-1, dim)
        diff = pts[:, None, :] - pts[None, :, :]
        diff = (diff + L / 2) % L - L / 2
        V = np.exp(-np.sum(diff * diff, axis=-1) / 2)
        direct = 0.25 * grid.dV**2 * float(dens @ V @ dens)
        worst = max(worst, abs(interaction(u, p) - direct) / abs(direct))
    return worst < 1e-10, f"max relative difference {worst:.2e}"


def _soliton():
    r = minimize_mass(1.0, 1.0, delta_cell(1), Grid(1, 1024, 128.0))
    de = abs(r.energy.total * 96 + 1)
    dl = abs(r.lam * 16 - 1)
    return r.converged and de < 1e-4 and dl < 1e-3, f"e rel err {de:.1e}, lambda rel err {dl:.1e}"


def _rearrangement():
    rng = np.random.default_rng(1)
    grid = Grid(2, 32, 8.0)
    u = Field(grid, rng.normal(size=grid.shape) * np.exp(-grid.r2 / 8))
    v = rearrange_decreasing(u)
    dm = abs(mass(v) - mass(u)) / mass(u)
    ok = dm < 1e-12 and grad_norm_sq(v) <= grad_norm_sq(u) * (1 + 1e-12)
    ok = ok and autocorrelation_monotone_check(u).monotone
    return ok, f"mass drift {dm:.1e}"


def _translation():
    grid = Grid(2, 32, 8.0)
    p = ion_atom(1.0, 2)
    u = Field(grid, np.roll(np.exp(-grid.r2), (5, -3), axis=(0, 1)))
    v = recenter(u)
    d = abs(energy(u, 3.0, p).total - energy(v, 3.0, p).total)
    return d < 1e-12, f"energy change {d:.1e}"


def _lanczos():
    from .spectrum import dense_lowest_eigenpair, lowest_eigenpair

    grid = Grid(2, 16, 8.0)
    u = Field(grid, np.exp(-grid.r2 / 2))
    p = gaussian_potential(1.0, 1.0, 2)
    a = lowest_eigenpair(u, 2.0, p).value
    b = dense_lowest_eigenpair(u, 2.0, p).value
    return abs(a - b) < 1e-8, f"|lanczos - dense| = {abs(a - b):.1e}"


def _w_kernel():
    p = ion_atom(1.0, 3)
    r = np.linspace(0.1, 5, 50)
    h = 1e-5
    fd = r * (p.profile_V(r + h) - p.profile_V(r - h)) / (2 * h)
    err = float(np.max(np.abs(fd - p.profile_W(r))))
    return err < 1e-6, f"max |W - r V'| = {err:.1e}"


def _rstar():
    errs = [abs(find_rstar(ion_atom(b, 2)) - b) for b in (0.5, 1.0, 2.0)]
    return max(errs) < 1e-8, f"max |r* - b| = {max(errs):.1e}"


def _pokhozaev_soliton():
    grid = Grid(1, 1024, 128.0)
    p = gaussian_potential(1.0, 0.5, 1)
    r = minimize_mass(1.0, 1.0, p, grid, MinimizeOptions(grad_tol=1e-9))
    rep = pokhozaev_residual(r.u, r.lam, 1.0, p)
    return rep.relative_residual < 1e-6, f"relative residual {rep.relative_residual:.1e}"


def _cache_roundtrip():
    from .runio import ProbeCache

    p = delta_cell(1)
    grid = Grid(1, 256, 64.0)
    with tempfile.TemporaryDirectory() as d:
        c = ProbeCache(Path(d))
        a = c(1.0, 1.0, p, grid)
        b = c(1.0, 1.0, p, grid)
        ok = c.hits == 1 and np.array_equal(a.u.values, b.u.values) and a.energy.total == b.energy.total
    return ok, "replayed probe is bit-identical" if ok else "replay differs"


def _gstar_coarse():
    from .transition import find_gstar

    res = find_gstar(1.0, ion_atom(1.0, 3), Grid(3, 32, 24.0), bracket=(16.0, 20.0), rel_tol=1e-2)
    return res.monotone(), f"g* in [{res.lo:.4g}, {res.hi:.4g}]"


QUICK = {
    "fft-vs-direct": _fft_vs_direct,
    "soliton-1d": _soliton,
    "rearrangement": _rearrangement,
    "translation": _translation,
    "lanczos-vs-dense": _lanczos,
    "w-kernel": _w_kernel,
    "rstar": _rstar,
    "pokhozaev-1d": _pokhozaev_soliton,
    "cache-roundtrip": _cache_roundtrip,
}
FULL = {"gstar-coarse-3d": _gstar_coarse}


def run_suites(full: bool = False) -> dict:
    suites = QUICK | (FULL if full else {})
    out = {}
    for name, fn in suites.items():
        t = time.time()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out[name] = (bool(ok), f"{detail} ({time.time() - t:.2f} s)")
    return out
