"""Ground states on the mass sphere ``||u||_2^2 = m`` by normalized gradient flow.

One step of the flow is the semi-implicit update

    u <- u - dt (1 + dt |k|^2)^{-1} (E'(u) + lam u),   u <- sqrt(m) u / ||u||

with ``lam`` re-estimated from the current state, so the step is a
preconditioned steepest descent on the sphere.  The time step grows after
accepted steps and is halved whenever the energy would increase.

On a periodic box a state whose mass escapes to infinity ends up flat; such
runs are reported as ``VANISHED`` rather than converged.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import EnergyBreakdown, _mean_field_array
from .errors import AsymmetricPotentialError, InsufficientTailError, NaNEncounteredError
from .grid import Field, Grid, block_mass_map, lp_norm, mass, rearrange_decreasing
from .potentials import Potential

log = logging.getLogger(__name__)

__all__ = [
    "Status",
    "MinimizeOptions",
    "MinimizeResult",
    "minimize_mass",
    "ground_energy",
    "energy_curve",
    "EnergyCurve",
    "check_subadditivity",
    "check_strict_scaling",
    "tail_decay_report",
    "initial_field",
]

ZERO_ENERGY_TOL = 1e-6


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    VANISHED = "Vanished"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    CONSTRAINT_HIT = "ConstraintHit"


@dataclass(frozen=True)
class MinimizeOptions:
    max_iters: int = 50000
    dt0: float | None = None  # None -> 0.5 h^2
    grad_tol: float = 1e-6
    vanish_tol: float = 0.05
    seed: int = 0
    init: str = "gaussian-bump"
    init_field: Field | None = None
    init_noise: float = 0.0
    init_width: float | None = None  # None -> L/16
    block: float = 1.0
    dt_max: float = 1e8
    dt_grow: float = 1.25
    vanish_window: int = 200
    recenter_every: int = 50
    explicit: bool = False
    radial: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("grad_tol", "vanish_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dt0 is not None and not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if self.init not in ("gaussian-bump", "random", "provided-field"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "provided-field" and self.init_field is None:
            raise ValueError("init='provided-field' needs init_field")

    def with_(self, **kw) -> "MinimizeOptions":
        return replace(self, **kw)


@dataclass
class MinimizeResult:
    u: Field
    energy: EnergyBreakdown
    lam: float
    residual: float
    status: Status
    iterations: int
    diagnostics: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def to_dict(self) -> dict:
        return {
            "energy": self.energy.to_dict(),
            "lambda": self.lam,
            "residual": self.residual,
            "status": self.status.value,
            "iterations": self.iterations,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def ground_energy(res: MinimizeResult) -> float:
    """Estimate of ``e(g, m)`` from one minimization.

    ``e(g, m) <= 0`` always (spreading states have energies tending to zero), so
    vanished runs and localized states of positive energy both report ``0``.
    The flat state's slightly negative energy on a periodic box is an artifact
    of the box and is never reported.
    """
    if res.status is Status.VANISHED:
        return 0.0
    return min(res.energy.total, 0.0)


def initial_field(grid: Grid, m: float, opts: MinimizeOptions) -> np.ndarray:
    rng = np.random.default_rng(opts.seed)
    if opts.init == "provided-field":
        a = np.array(opts.init_field.values, dtype=float)
    elif opts.init == "random":
        noise = rng.uniform(0.0, 1.0, grid.shape)
        t = (grid.L / 16) ** 2 / 2
        a = np.abs(grid.irfft(grid.rfft(noise - noise.mean()) * np.exp(-t * grid.k2)))
        a = a + 1e-3 * np.max(a)
    else:
        w = opts.init_width or grid.L / 16
        a = np.exp(-grid.r2 / (2 * w * w))
    if opts.init_noise > 0:
        smooth = grid.irfft(grid.rfft(rng.standard_normal(grid.shape)) * np.exp(-grid.k2 * grid.h**2 * 4))
        a = a * (1 + opts.init_noise * smooth / np.max(np.abs(smooth)))
    nrm = grid.dV * np.sum(a * a)
    if not nrm > 0:
        raise ValueError("initial field has zero mass")
    return a * np.sqrt(m / nrm)


class _State:
    """Energy, gradient and multiplier of one iterate (array level)."""

    __slots__ = ("a", "grad2", "pair", "E", "G", "lam", "R", "res", "ahat")

    def __init__(self, grid: Grid, p: Potential, g: float, a: np.ndarray, m: float):
        self.a = a
        ahat = grid.rfft(a)
        self.ahat = ahat
        self.grad2 = float(np.sum(grid.rfft_weights * grid.k2 * (ahat.real**2 + ahat.imag**2)) * grid.dV / grid.size)
        phi = _mean_field_array(grid, p, a)
        self.pair = float(grid.dV * np.sum(a * a * phi))
        self.E = 0.5 * self.grad2 - 0.25 * g * self.pair
        lap = grid.irfft(-grid.k2 * ahat)
        self.G = -lap - g * phi * a
        self.lam = (g * self.pair - self.grad2) / m
        self.R = self.G + self.lam * a
        self.res = float(np.sqrt(grid.dV * np.sum(self.R * self.R)))


def _shift_to_origin(grid: Grid, a: np.ndarray, block: float) -> np.ndarray:
    bm = block_mass_map(Field(grid, a), block)
    origin = (grid.n // 2,) * grid.dim
    if bm[origin] >= bm.max() * (1 - 1e-12):
        return a
    idx = np.unravel_index(int(np.argmax(bm)), bm.shape)
    return np.roll(a, tuple(o - i for o, i in zip(origin, idx)), axis=tuple(range(grid.dim)))


def _flow(grid, p, g, m, a, opts: MinimizeOptions, kin_floor=None, callback=None):
    """Core loop; returns (state, status, iterations, history)."""
    if not p.symmetric:
        raise AsymmetricPotentialError(f"asymmetric-potential: {p.name}")
    dt = opts.dt0 if opts.dt0 is not None else 0.5 * grid.h**2
    st = _State(grid, p, g, a, m)
    tol = opts.grad_tol * np.sqrt(m)
    vanish_level = opts.vanish_tol * np.sqrt(m)
    low_count = 0
    last_peak = np.inf
    history = []
    status = Status.BUDGET_EXHAUSTED
    it = 0
    for it in range(1, opts.max_iters + 1):
        if st.res <= tol:
            status = Status.CONVERGED
            break
        if kin_floor is not None and st.grad2 <= kin_floor:
            status = Status.CONSTRAINT_HIT
            break
        peak = float(np.max(np.abs(st.a)))
        # one cell already carries peak^2 dV, so the map is only needed below that
        if peak * np.sqrt(grid.dV) >= vanish_level:
            low = False
        else:
            low = float(np.max(block_mass_map(Field(grid, st.a), opts.block))) < vanish_level
        if low and peak <= last_peak:
            low_count += 1
        else:
            low_count = 0
        last_peak = peak
        if low_count >= opts.vanish_window:
            status = Status.VANISHED
            break
        Ghat = grid.rfft(st.G)
        shift = max(st.lam, 0.0)
        w = grid.rfft_weights

        def make_step(dt):
            # gradient in the metric of P^{-1}, projected onto the tangent space
            # of the sphere in that metric so renormalization does not undo it
            if opts.explicit:
                return dt * grid.rfft(st.R)
            P = dt / (1.0 + dt * (grid.k2 + shift))
            PG = P * Ghat
            Pu = P * st.ahat
            num = np.sum(w * (np.conj(st.ahat) * PG).real)
            den = np.sum(w * (np.conj(st.ahat) * Pu).real)
            return PG - (num / den) * Pu

        step_hat = make_step(dt)
        slack = 1e-13 * (0.5 * st.grad2 + 0.25 * g * abs(st.pair)) + 1e-300
        accepted = False
        nan_halvings = 0
        while True:
            trial = st.a - grid.irfft(step_hat)
            if not np.all(np.isfinite(trial)):
                nan_halvings += 1
                if nan_halvings > 30:
                    raise NaNEncounteredError("nan-encountered: step too large after 30 halvings")
                dt *= 0.5
                step_hat = make_step(dt)
                continue
            if opts.radial:
                trial = rearrange_decreasing(Field(grid, trial)).values
            trial = trial * np.sqrt(m / (grid.dV * np.sum(trial * trial)))
            new = _State(grid, p, g, trial, m)
            if not np.isfinite(new.E):
                nan_halvings += 1
                if nan_halvings > 30:
                    raise NaNEncounteredError("nan-encountered: energy not finite after 30 halvings")
                dt *= 0.5
                step_hat = make_step(dt)
                continue
            # below rounding level the energy cannot rank iterates; use the residual
            if new.E < st.E - slack or (new.E <= st.E + slack and new.res <= st.res):
                accepted = True
                break
            dt *= 0.5
            if dt < 1e-14:
                break
            step_hat = make_step(dt)
        if not accepted:
            log.debug("step size underflow at iteration %d (res=%.3e)", it, st.res)
            break
        st = new
        dt = min(dt * opts.dt_grow, opts.dt_max)
        if opts.recenter_every and it % opts.recenter_every == 0 and not opts.radial:
            shifted = _shift_to_origin(grid, st.a, opts.block)
            if shifted is not st.a:
                st = _State(grid, p, g, shifted, m)
        history.append(st.E)
        if callback is not None:
            callback(it, st)
    else:
        it = opts.max_iters
    if status is Status.BUDGET_EXHAUSTED and st.res <= tol:
        status = Status.CONVERGED
    if status is Status.CONVERGED:
        if float(np.max(block_mass_map(Field(grid, st.a), opts.block))) < vanish_level:
            status = Status.VANISHED
    return st, status, it, history


def _package(grid, p, g, m, st, status, it, history, block=1.0) -> MinimizeResult:
    u = Field(grid, st.a)
    if float(np.sum(st.a)) < 0:
        u = -u
    e = EnergyBreakdown.build(0.5 * st.grad2, 0.25 * st.pair, g, m)
    diagnostics = {
        "peak": float(np.max(np.abs(st.a))),
        "concentration": float(np.max(block_mass_map(u, block))),
        "l4_4": lp_norm(u, 4) ** 4,
        "grad_norm_sq": st.grad2,
        "mass": mass(u),
    }
    return MinimizeResult(u, e, st.lam, st.res, status, it, diagnostics, history)


def minimize_mass(g: float, m: float, p: Potential, grid: Grid, opts: MinimizeOptions | None = None) -> MinimizeResult:
    """Minimize the energy over fields of mass ``m``."""
    if not g > 0 or not m > 0:
        raise ValueError(f"need g > 0 and m > 0, got g={g}, m={m}")
    opts = opts or MinimizeOptions()
    a = initial_field(grid, m, opts)
    st, status, it, history = _flow(grid, p, g, m, a, opts)
    res = _package(grid, p, g, m, st, status, it, history, opts.block)
    log.info("minimize g=%.6g m=%.4g: %s after %d its, E=%.3e res=%.2e", g, m, status.value, it, res.energy.total, res.residual)
    return res


@dataclass
class EnergyCurve:
    g: list
    e: list
    status: list
    results: list = field(default_factory=list, repr=False)

    def rows(self):
        return list(zip(self.g, self.e, [s.value for s in self.status]))


def energy_curve(
    g_list, m: float, p: Potential, grid: Grid, opts: MinimizeOptions | None = None, warm: bool = True, minimizer=None
) -> EnergyCurve:
    """``e(g, m)`` along an increasing list of couplings.

    With ``warm`` each run starts from the previous bound state; without it
    every coupling is an independent cold start.
    """
    minimize = minimizer or minimize_mass
    g_list = [float(x) for x in g_list]
    if any(b <= a for a, b in zip(g_list, g_list[1:])):
        raise ValueError("g_list must be strictly increasing")
    opts = opts or MinimizeOptions()
    out = EnergyCurve([], [], [])
    prev = None
    for g in g_list:
        o = opts
        if warm and prev is not None and prev.status is not Status.VANISHED:
            o = opts.with_(init="provided-field", init_field=prev.u)
        res = minimize(g, m, p, grid, o)
        out.g.append(g)
        out.e.append(ground_energy(res))
        out.status.append(res.status)
        out.results.append(res)
        prev = res
    return out


@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs: float
    margin: float
    holds: bool
    details: dict = field(default_factory=dict)


def check_subadditivity(g, m1, m2, p, grid, opts=None) -> InequalityReport:
    """``e(g, m1 + m2) <= e(g, m1) + e(g, m2)`` up to ``1e-5 (1 + |e(g, m1+m2)|)``."""
    if not (m1 > 0 and m2 > 0):
        raise ValueError("masses must be positive")
    opts = opts or MinimizeOptions()
    r12 = minimize_mass(g, m1 + m2, p, grid, opts)
    r1 = minimize_mass(g, m1, p, grid, opts)
    r2 = minimize_mass(g, m2, p, grid, opts)
    lhs = ground_energy(r12)
    rhs = ground_energy(r1) + ground_energy(r2)
    tol = 1e-5 * (1 + abs(lhs))
    return InequalityReport(lhs, rhs, tol, lhs <= rhs + tol, {"status": [r.status.value for r in (r12, r1, r2)]})


def check_strict_scaling(g, m, t, p, grid, opts=None) -> InequalityReport:
    """``e(g, t m) < t^2 e(g, m)`` with margin ``1e-6 |e(g, m)|``."""
    if not t > 1:
        raise ValueError("t must exceed 1")
    opts = opts or MinimizeOptions()
    r1 = minimize_mass(g, m, p, grid, opts)
    warm = opts.with_(init="provided-field", init_field=Field(grid, np.sqrt(t) * r1.u.values)) if r1.converged else opts
    rt = minimize_mass(g, t * m, p, grid, warm)
    lhs = ground_energy(rt)
    rhs = t * t * ground_energy(r1)
    margin = 1e-6 * abs(ground_energy(r1))
    return InequalityReport(lhs, rhs, margin, lhs < rhs - margin, {"status": [r1.status.value, rt.status.value]})


@dataclass(frozen=True)
class TailDecay:
    rate: float
    r_squared: float
    bound: float
    satisfied: bool | None
    shells: int


def tail_decay_report(u: Field, lam: float, shell=(0.25, 0.4), floor: float = 1e-14) -> TailDecay:
    """Fit ``log|u|`` against ``|x|`` on the shell ``[0.25 L, 0.4 L]``.

    The fitted rate is compared with the conservative bound ``0.5 sqrt(lam)/2``.
    If fewer than 10 radial shells survive the ``floor`` cut the fit is
    reported with ``satisfied=None``; if fewer than 2 remain there is nothing to
    fit and :class:`InsufficientTailError` is raised.
    """
    grid = u.grid
    r = np.sqrt(grid.r2).ravel()
    v = np.abs(u.values).ravel()
    lo, hi = shell[0] * grid.L, shell[1] * grid.L
    sel = (r >= lo) & (r <= hi) & (v > floor)
    if not np.any(sel):
        raise InsufficientTailError("insufficient-tail: no samples above the floor in the shell")
    # shell averages of log|u| on rings of width h
    bins = np.floor((r[sel] - lo) / grid.h).astype(int)
    counts = np.bincount(bins)
    sums = np.bincount(bins, weights=np.log(v[sel]))
    rs = np.bincount(bins, weights=r[sel])
    keep = counts > 0
    x = rs[keep] / counts[keep]
    y = sums[keep] / counts[keep]
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        raise InsufficientTailError("insufficient-tail: fewer than two usable shells")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = np.sum((y - pred) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else 0.0
    rate = -float(slope)
    bound = 0.5 * np.sqrt(max(lam, 0.0)) / 2
    satisfied = None if x.size < 10 else bool(rate >= bound)
    return TailDecay(rate, float(r2), float(bound), satisfied, int(x.size))
