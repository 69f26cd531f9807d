"""Metastable states in 3D: local minimizers away from the flat state and
mountain-pass saddles between the two.

Below ``g*`` the global infimum ``e(g, m) = 0`` is not attained, but a state
of positive energy can still be a local minimizer once the region of small
gradient is excluded.  Between that state (or the global minimizer above
``g*``) and the spread-out states sits a saddle, found here with a string
method with a climbing image.

Dilations enter through the augmented functional

    E~(theta, u) = e^{2 theta}/2 ||grad u||^2 - g/4 <u^2, V(. / e^theta) * u^2>,

which is the energy of ``e^{3 theta/2} u(e^theta x)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import constants
from .energy import energy
from .errors import (
    ConstraintHitError,
    DimensionMismatchError,
    GeometryViolatedError,
    InfiniteNormError,
    NoAdmissibleRadiusError,
    NoConvergenceError,
    ThetaRangeError,
)
from .grid import Field, Grid, dilate, embed, grad_norm_sq, mass, rearrange_decreasing
from .groundstate import MinimizeOptions, MinimizeResult, Status, _flow, _package, _State, initial_field
from .potentials import Potential, split_norms

log = logging.getLogger(__name__)

__all__ = [
    "nonexistence_threshold_g2",
    "w_norm",
    "compute_rho0",
    "local_minimize",
    "AugmentedState",
    "augmented_energy",
    "dtheta_augmented",
    "Path",
    "SaddleOptions",
    "SaddleResult",
    "mountain_pass",
]

THETA_MAX = 1.0


def _need_3d(p: Potential):
    if p.dim != 3:
        raise DimensionMismatchError("dimension-mismatch: metastable analysis is three-dimensional")


def w_norm(p: Potential, grid: Grid | None = None, q: float = 1.5) -> float:
    """``||W||_q``, by radial quadrature for radial potentials, else on ``grid``."""
    p.require_differentiable()
    if grid is None and p.radial and p.profile_W is not None:
        f = lambda r: abs(float(p.profile_W(np.array(r)))) ** q * 4 * np.pi * r * r  # noqa: E731
        val, err = integrate.quad(f, 0, np.inf, limit=400)
        if not np.isfinite(val) or err > 1e-6 * max(val, 1e-300):
            raise InfiniteNormError(f"infinite-W-norm: quadrature gave {val} +- {err}")
        return float(val ** (1 / q))
    if grid is None:
        raise ValueError("a grid is required for non-radial potentials")
    W = p.sample_W(grid).values
    val = grid.dV * float(np.sum(np.abs(W) ** q))
    if not np.isfinite(val):
        raise InfiniteNormError("infinite-W-norm")
    return float(val ** (1 / q))


def nonexistence_threshold_g2(m: float, p: Potential, grid: Grid | None = None) -> float:
    """``g2 = 4 / (C_S m ||W||_{3/2})``.

    Below ``g2`` the virial relation ``||grad u||^2 = -(g/4) <u^2, W * u^2>``
    and Young plus Sobolev force ``grad u = 0``, so there are no critical points.
    """
    _need_3d(p)
    if not m > 0:
        raise ValueError("mass must be positive")
    wn = w_norm(p, grid)
    if not wn > 0:
        return np.inf
    return 4.0 / (constants.sobolev_constant() * m * wn)


def compute_rho0(g_tilde: float, m: float, p: Potential, grid: Grid, cap: float = 1.0) -> float:
    """Radius ``rho0`` of the gradient ball on which ``E_g(u) >= ||grad u||^2 / 8``.

    ``V`` is split at radius ``R`` into ``V_1`` (inside) and ``V_2``.  The tail
    is absorbed by Sobolev when ``g/4 C_S m ||V_2||_{3/2} <= 1/4`` and the core
    by ``||u||_4^4 <= C_4 ||grad u||^3 ||u||`` when
    ``g/4 C_4 ||V_1||_1 sqrt(m) rho <= 1/8``.  The smallest admissible ``R`` on
    the grid gives the largest ``rho0``, which is capped at ``cap``.
    """
    _need_3d(p)
    V = p.sample(grid).values
    if not np.any(V):
        return float(cap)
    cs = constants.sobolev_constant()
    c4 = constants.gn4_constant()
    k = 0.25 * g_tilde
    radii = np.unique(np.sqrt(grid.index_r2.ravel())) * grid.h
    radii = radii[radii > 0]
    # tail norm is nonincreasing in R; find the first admissible radius
    lo, hi = 0, len(radii) - 1
    if k * cs * m * split_norms(p, grid, radii[hi] + grid.h)[1] > 0.25:
        raise NoAdmissibleRadiusError("no-admissible-R: box too small to control the tail of V")
    R = radii[hi] + grid.h
    if k * cs * m * split_norms(p, grid, radii[hi])[1] <= 0.25:
        while lo < hi:
            mid = (lo + hi) // 2
            if k * cs * m * split_norms(p, grid, radii[mid])[1] <= 0.25:
                hi = mid
            else:
                lo = mid + 1
        R = radii[lo]
    core = split_norms(p, grid, R)[0]
    if core == 0:
        return float(cap)
    return float(min(cap, 1.0 / (8.0 * k * c4 * core * np.sqrt(m))))


def local_minimize(
    g: float,
    m: float,
    p: Potential,
    grid: Grid,
    rho0: float,
    opts: MinimizeOptions | None = None,
    init: Field | None = None,
    band: float = 0.1,
) -> MinimizeResult:
    """Gradient flow on ``{||grad u||^2 > rho0^2 / 4}``.

    The flow stops with :class:`ConstraintHitError` (carrying the last state)
    as soon as ``||grad u||^2 <= (1 + band) rho0^2 / 4``.  Start from ``init``,
    ideally a minimizer at a nearby larger coupling.
    """
    _need_3d(p)
    opts = opts or MinimizeOptions()
    if init is not None:
        opts = opts.with_(init="provided-field", init_field=init)
    a = initial_field(grid, m, opts)
    floor = (1 + band) * rho0 * rho0 / 4
    st, status, it, hist = _flow(grid, p, g, m, a, opts, kin_floor=floor)
    res = _package(grid, p, g, m, st, status, it, hist, opts.block)
    if status is Status.CONSTRAINT_HIT or status is Status.VANISHED:
        res.status = Status.CONSTRAINT_HIT
        raise ConstraintHitError(
            f"constraint-hit: ||grad u||^2 = {st.grad2:.3e} reached the guard {floor:.3e} at g={g}", res
        )
    return res


@dataclass
class AugmentedState:
    theta: float
    u: Field

    def dilated(self) -> Field:
        return dilate(self.u, float(np.exp(self.theta)))


def _check_theta(theta: float, theta_max: float):
    if abs(theta) > theta_max:
        raise ThetaRangeError(f"theta-out-of-range: |{theta}| > {theta_max}")


def augmented_energy(theta: float, u: Field, g: float, p: Potential, theta_max: float = THETA_MAX) -> float:
    """Energy of the dilated field, with the dilation moved onto the kernel."""
    _check_theta(theta, theta_max)
    grid = u.grid
    a = u.values
    dens = a * a
    khat = p.kernel_hat(grid) if theta == 0 else p.dilated_kernel_hat(grid, np.exp(theta))
    pair = grid.dV * float(np.sum(dens * grid.irfft(khat * grid.rfft(dens))))
    return float(0.5 * np.exp(2 * theta) * grad_norm_sq(u) - 0.25 * g * pair)


def dtheta_augmented(theta: float, u: Field, g: float, p: Potential, theta_max: float = THETA_MAX) -> float:
    """``e^{2 theta} ||grad u||^2 + g/4 <u^2, W(. / e^theta) * u^2>``."""
    _check_theta(theta, theta_max)
    p.require_differentiable()
    grid = u.grid
    a = u.values
    dens = a * a
    khat = p.kernel_hat_W(grid) if theta == 0 else p.dilated_kernel_hat(grid, np.exp(theta), "W")
    pair = grid.dV * float(np.sum(dens * grid.irfft(khat * grid.rfft(dens))))
    return float(np.exp(2 * theta) * grad_norm_sq(u) + 0.25 * g * pair)


@dataclass
class Path:
    """Discrete path ``gamma(k / K)``, ``k = 0..K``, on the mass sphere."""

    nodes: list
    energies: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.nodes) - 1

    def max_index(self) -> int:
        return int(np.argmax(self.energies))

    def profile_csv(self) -> str:
        lines = ["k,t,energy,grad_norm_sq"]
        for k, (u, e) in enumerate(zip(self.nodes, self.energies)):
            lines.append(f"{k},{k / self.K!r},{e!r},{grad_norm_sq(u)!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SaddleOptions:
    K: int = 24
    max_sweeps: int = 4000
    saddle_tol: float | None = None  # None -> 1e-4 sqrt(m)
    step: float = 0.5
    climb_window: int = 50
    climb_drift: float = 1e-4
    s_min: float = 0.3
    seed: int = 0
    box_factor: int = 1
    polish_iters: int = 2000


@dataclass
class SaddleResult:
    u: Field
    c_mp: float
    residual: float
    theta_residual: float
    path_history: list
    path: Path
    sweeps: int
    converged: bool
    rho1: float

    def to_dict(self) -> dict:
        return {
            "c_mp": self.c_mp,
            "residual": self.residual,
            "theta_residual": self.theta_residual,
            "sweeps": self.sweeps,
            "converged": self.converged,
            "rho1": self.rho1,
            "rho1_sq_over_8": self.rho1**2 / 8,
            "path_energies": list(self.path.energies),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _radial_normalize(grid: Grid, a: np.ndarray, m: float) -> np.ndarray:
    a = rearrange_decreasing(Field(grid, np.abs(a))).values
    return a * np.sqrt(m / (grid.dV * np.sum(a * a)))


def _precondition(grid: Grid, st: _State, direction: np.ndarray | None = None) -> np.ndarray:
    """``(k^2 + lam_+)^{-1}`` applied to the gradient, projected tangent to the sphere."""
    P = 1.0 / (grid.k2 + max(st.lam, 0.0) + 1e-12)
    Ghat = grid.rfft(st.G if direction is None else direction)
    w = grid.rfft_weights
    PG = P * Ghat
    Pu = P * st.ahat
    c = np.sum(w * (np.conj(st.ahat) * PG).real) / np.sum(w * (np.conj(st.ahat) * Pu).real)
    return grid.irfft(PG - c * Pu)


def _reparametrize(grid: Grid, nodes: list, m: float, fixed: int | None) -> list:
    """Equal L2 arc length between nodes (separately on each side of ``fixed``)."""

    def redistribute(seg):
        if len(seg) <= 2:
            return seg
        d = [np.sqrt(grid.dV * np.sum((b - a) ** 2)) for a, b in zip(seg, seg[1:])]
        s = np.concatenate([[0.0], np.cumsum(d)])
        if s[-1] == 0:
            return seg
        targets = np.linspace(0, s[-1], len(seg))
        out = [seg[0]]
        for t in targets[1:-1]:
            j = min(int(np.searchsorted(s, t, side="right")) - 1, len(seg) - 2)
            f = (t - s[j]) / (s[j + 1] - s[j]) if s[j + 1] > s[j] else 0.0
            # blends of radially nonincreasing nodes stay radially nonincreasing
            a = (1 - f) * seg[j] + f * seg[j + 1]
            out.append(a * np.sqrt(m / (grid.dV * np.sum(a * a))))
        out.append(seg[-1])
        return out

    if fixed is None or fixed <= 0 or fixed >= len(nodes) - 1:
        return redistribute(nodes)
    return redistribute(nodes[: fixed + 1])[:-1] + redistribute(nodes[fixed:])


def _sphere(grid: Grid, a: np.ndarray, m: float) -> np.ndarray:
    return a * np.sqrt(m / (grid.dV * np.sum(a * a)))


def _climb_step(grid: Grid, st: _State, nodes: list, k: int, climb: bool) -> np.ndarray:
    """Preconditioned descent step; for the climbing node, reflected along the path."""
    step = _precondition(grid, st)
    if climb:
        step = _reflect(step, nodes[k + 1] - nodes[k - 1], st.a)
    return step


def _reflect(step: np.ndarray, tau: np.ndarray, a: np.ndarray) -> np.ndarray:
    tau = tau - (np.sum(tau * a) / np.sum(a * a)) * a
    tau = tau / np.sqrt(np.sum(tau * tau))
    return step - 2 * np.sum(step * tau) * tau


def _extend(f: Field, lam: float, factor: int) -> Field:
    """Embed ``f`` in a larger box, continuing it beyond the old half-width as
    ``A exp(-sqrt(lam) r) / r`` matched on the last full shell."""
    big = embed(f, factor)
    kappa = np.sqrt(max(lam, 0.0))
    r = np.sqrt(big.grid.r2)
    r0 = 0.5 * f.grid.L - f.grid.h
    shell = (r > r0 - f.grid.h) & (r <= r0)
    inner = r <= r0
    if not np.any(shell):
        return big
    level = float(np.mean(big.values[shell]))
    rs = float(np.mean(r[shell]))
    amp = level * rs * np.exp(kappa * rs)
    with np.errstate(divide="ignore"):
        tail = amp * np.exp(-kappa * r) / np.where(r > 0, r, 1.0)
    return Field(big.grid, np.where(inner, big.values, tail))


def _polish(g, m, p, grid: Grid, st: _State, tau: np.ndarray, tol: float, opts: SaddleOptions):
    """Refine the climbing node alone in a box ``box_factor`` times larger.

    Returns the larger grid and the final state on it.
    """
    u = _extend(Field(grid, st.a), st.lam, opts.box_factor)
    t = embed(Field(grid, tau), opts.box_factor).values
    big = u.grid
    a = _sphere(big, u.values, m)
    for it in range(opts.polish_iters):
        cur = _State(big, p, g, a, m)
        theta = abs(dtheta_augmented(0.0, Field(big, a), g, p))
        if it % 50 == 0:
            log.info("polish %d: E=%.8g res=%.2e theta=%.2e", it, cur.E, cur.res, theta)
        if cur.res <= tol and theta <= tol:
            break
        a = _sphere(big, a - opts.step * _reflect(_precondition(big, cur), t, a), m)
    return big, cur


def mountain_pass(
    g: float,
    m: float,
    p: Potential,
    grid: Grid,
    rho1: float,
    u1: Field,
    opts: SaddleOptions | None = None,
) -> SaddleResult:
    """Saddle between the flat state and ``u1`` by a climbing-image string.

    ``gamma(0)`` is the constant field (zero gradient) and ``gamma(1) = u1``.
    Interior nodes start as blends of the flat field with dilations of ``u1``,
    rearranged to be nonnegative and radially nonincreasing.  The flow keeps
    the lattice symmetry of those nodes, and arc-length reparametrization
    only blends neighbours, so no further rearrangement is applied (a lattice
    rearrangement after every step undoes part of the step and stalls the
    string).  Each sweep moves every interior node along the preconditioned
    tangent gradient, except the climbing node, whose component along the
    path is reversed once the maximum has settled.

    Converged when both the sphere-tangent residual and ``|dE~/dtheta|`` at
    the climbing node are below ``saddle_tol``.  With ``box_factor > 1`` the
    string only has to reach the residual test; the climbing node is then
    embedded in a box that many times larger (same spacing, exponential tail
    continued outward) and refined alone there.  Saddles are broad, so the
    dilation test is the one that feels the periodic box.
    """
    _need_3d(p)
    opts = opts or SaddleOptions()
    tol = opts.saddle_tol if opts.saddle_tol is not None else 1e-4 * np.sqrt(m)
    e1 = energy(u1, g, p).total
    grad1 = np.sqrt(grad_norm_sq(u1))
    if abs(mass(u1) - m) > 1e-6 * m:
        raise GeometryViolatedError(f"geometry-violated: u1 has mass {mass(u1)}, expected {m}")
    if np.min(u1.values) < -1e-8 * np.max(np.abs(u1.values)):
        raise GeometryViolatedError("geometry-violated: u1 must be nonnegative")
    if not grad1 > rho1:
        raise GeometryViolatedError(f"geometry-violated: ||grad u1|| = {grad1:.4g} <= rho1 = {rho1:.4g}")
    if not e1 < rho1**2 / 8:
        raise GeometryViolatedError(f"geometry-violated: E(u1) = {e1:.4g} >= rho1^2/8 = {rho1**2 / 8:.4g}")

    K = opts.K
    flat = np.full(grid.shape, np.sqrt(m / (grid.L**grid.dim)))
    end = _radial_normalize(grid, u1.values, m)
    nodes = [flat]
    for k in range(1, K):
        t = k / K
        s = opts.s_min + (1 - opts.s_min) * t
        nodes.append(_radial_normalize(grid, (1 - t) * flat + t * dilate(Field(grid, end), s).values, m))
    nodes.append(end)

    history = []
    climbing = False
    ci = None
    states = [None] * (K + 1)
    res = theta_res = np.inf
    sweep = 0
    polish = opts.box_factor > 1
    states[0] = _State(grid, p, g, nodes[0], m)
    states[K] = _State(grid, p, g, nodes[K], m)
    for sweep in range(1, opts.max_sweeps + 1):
        for k in range(1, K):
            states[k] = _State(grid, p, g, nodes[k], m)
        energies = [s.E for s in states]
        imax = int(np.argmax(energies[1:K])) + 1
        history.append(energies[imax])
        if not climbing and len(history) > opts.climb_window:
            window = history[-opts.climb_window :]
            if max(window) - min(window) < opts.climb_drift:
                climbing = True
        if climbing:
            ci = imax
            st = states[ci]
            res = st.res
            theta_res = abs(dtheta_augmented(0.0, Field(grid, st.a), g, p))
            # with a polishing stage the dilation test is left to the larger box
            if res <= tol and (polish or theta_res <= tol):
                break
        new = [nodes[0]]
        for k in range(1, K):
            st = states[k]
            new.append(_sphere(grid, st.a - opts.step * _climb_step(grid, st, nodes, k, climbing and k == ci), m))
        new.append(nodes[K])
        nodes = _reparametrize(grid, new, m, ci if climbing else None)
        if sweep % 20 == 0:
            log.info("sweep %d: max E=%.6g at node %s, res=%.2e theta=%.2e", sweep, history[-1], imax, res, theta_res)
    states = [_State(grid, p, g, a, m) for a in nodes]
    path = Path([Field(grid, a) for a in nodes], [s.E for s in states])
    idx = ci if ci is not None else path.max_index()
    st = states[idx]
    out_grid = grid
    if polish and 0 < idx < K:
        tau = nodes[idx + 1] - nodes[idx - 1]
        out_grid, st = _polish(g, m, p, grid, st, tau, tol, opts)
    u = Field(out_grid, st.a)
    theta_res = abs(dtheta_augmented(0.0, u, g, p))
    converged = st.res <= tol and theta_res <= tol
    out = SaddleResult(u, st.E, st.res, theta_res, history, path, sweep, converged, rho1)
    if not converged:
        raise NoConvergenceError(
            f"no-convergence: saddle residual {st.res:.2e}, theta residual {theta_res:.2e} after {sweep} sweeps",
            out,
        )
    return out
