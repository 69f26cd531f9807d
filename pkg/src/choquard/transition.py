"""Critical coupling ``g*`` and the order of the binding transition.

``g*`` is located by bisection on the monotone predicate ``e(g, m) < -e_neg``.
The order is diagnosed by following warm-started minimizers down a sequence
``g_j = g* (1 + 2^-j)`` and looking at what is left at ``g*``:

* ``First``  -- a localized state with energy ~ 0 survives at ``g*`` and the
  diagnostics along ``g_j`` stay of order one;
* ``Second`` -- ``||u_j||_4^4`` decays along ``g_j`` and the run at ``g*``
  vanishes;
* ``NoTransition`` -- binding at every coupling (``g* = 0``), checked in 1D
  by probing weak couplings on boxes scaled to the expected soliton width.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BracketNotFoundError, InconclusiveError
from .grid import Field, Grid
from .groundstate import MinimizeOptions, MinimizeResult, Status, ground_energy, minimize_mass
from .potentials import Potential

log = logging.getLogger(__name__)

E_NEG_TOL = 1e-6

__all__ = [
    "E_NEG_TOL",
    "e_zero_tol",
    "Order",
    "Probe",
    "GStarResult",
    "TransitionReport",
    "find_gstar",
    "classify_transition",
    "always_binding_probe",
    "clr_witness",
    "CLRTable",
]


def e_zero_tol(kinetic: float = 0.0) -> float:
    """Energies with ``|e|`` below this count as zero: ``1e-5 max(1, K)``."""
    return 1e-5 * max(1.0, abs(kinetic))


class Order(str, enum.Enum):
    FIRST = "First"
    SECOND = "Second"
    NONE = "NoTransition"


@dataclass
class Probe:
    """Summary of one minimization at coupling ``g``."""

    g: float
    e: float
    energy: float
    status: str
    grad_norm_sq: float
    l4_4: float
    concentration: float
    lam: float
    iterations: int

    @classmethod
    def from_result(cls, g: float, res: MinimizeResult) -> "Probe":
        d = res.diagnostics
        return cls(
            float(g),
            ground_energy(res),
            res.energy.total,
            res.status.value,
            d["grad_norm_sq"],
            d["l4_4"],
            d["concentration"],
            res.lam,
            res.iterations,
        )

    @property
    def bound(self) -> bool:
        return self.e < -E_NEG_TOL


PROBE_FIELDS = list(Probe.__dataclass_fields__)


def _probes_csv(probes) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROBE_FIELDS)
    for pr in probes:
        w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(pr).values()])
    return buf.getvalue()


@dataclass
class GStarResult:
    g_star: float
    lo: float
    hi: float
    trace: list = field(default_factory=list)
    states: dict = field(default_factory=dict, repr=False)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def monotone(self) -> bool:
        """Once bound at some probed ``g``, bound at every larger probed ``g``."""
        seen = False
        for pr in sorted(self.trace, key=lambda q: q.g):
            if pr.bound:
                seen = True
            elif seen:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "g_star": self.g_star,
            "bracket": [self.lo, self.hi],
            "width": self.width,
            "monotone": self.monotone(),
            "trace": [asdict(pr) for pr in self.trace],
        }

    def trace_csv(self) -> str:
        return _probes_csv(self.trace)


class _Prober:
    """Runs minimizations, warm-starting each from the nearest bound state above."""

    def __init__(self, m, p, grid, opts, minimizer=None):
        self.m, self.p, self.grid, self.opts = m, p, grid, opts
        self.minimize = minimizer or minimize_mass
        self.trace: list[Probe] = []
        self.states: dict[float, Field] = {}

    def __call__(self, g: float) -> Probe:
        above = [x for x in self.states if x > g]
        o = self.opts
        if above:
            o = o.with_(init="provided-field", init_field=self.states[min(above)])
        res = self.minimize(g, self.m, self.p, self.grid, o)
        pr = Probe.from_result(g, res)
        if pr.bound:
            self.states[g] = res.u
        self.trace.append(pr)
        log.info("probe g=%.8g e=%.3e (%s)", g, pr.e, pr.status)
        return pr


def find_gstar(
    m: float,
    p: Potential,
    grid: Grid,
    bracket: tuple[float, float] | None = None,
    tol_g: float | None = None,
    rel_tol: float = 1e-3,
    opts: MinimizeOptions | None = None,
    max_expand: int = 12,
    minimizer=None,
) -> GStarResult:
    """Bisection for ``g*`` on the predicate ``e(g, m) < -1e-6``.

    The bracket ``[g_lo, g_hi]`` is widened geometrically (factor 2) until the
    predicate fails at ``g_lo`` and holds at ``g_hi``.  Bisection stops when the
    width is below ``tol_g`` or, if that is not given, ``rel_tol * g_hi``.
    ``g_star`` is the bracket midpoint.  ``minimizer`` replaces
    :func:`minimize_mass` (same signature), e.g. to cache probes.
    """
    if not m > 0:
        raise ValueError("mass must be positive")
    lo, hi = bracket if bracket is not None else (1.0, 2.0)
    if not 0 < lo < hi:
        raise ValueError(f"bad bracket {bracket}")
    probe = _Prober(m, p, grid, opts or MinimizeOptions(), minimizer)
    for _ in range(max_expand + 1):
        if probe(hi).bound:
            break
        lo, hi = hi, 2 * hi
    else:
        raise BracketNotFoundError(f"bracket-not-found: e(g) >= -{E_NEG_TOL} up to g={hi / 2:g}")
    for _ in range(max_expand + 1):
        if not probe(lo).bound:
            break
        lo, hi = lo / 2, lo
    else:
        raise BracketNotFoundError(f"bracket-not-found: e(g) < -{E_NEG_TOL} down to g={lo * 2:g}")
    while True:
        tol = tol_g if tol_g is not None else rel_tol * hi
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if probe(mid).bound:
            hi = mid
        else:
            lo = mid
    out = GStarResult(0.5 * (lo + hi), lo, hi, probe.trace, probe.states)
    if not out.monotone():
        raise InconclusiveError("non-monotone predicate along the bisection trace", out.trace)
    return out


def _integral_V(p: Potential) -> float:
    g = Grid(p.dim, 256 if p.dim == 1 else 32, 16.0 * p.width)
    return float(p.kernel_hat(g).flat[0].real)


def always_binding_probe(
    g: float, m: float, p: Potential, h: float = 0.5, span: float = 50.0, opts=None, minimizer=None
) -> Probe:
    """1D minimization on a box scaled to the soliton length ``4 / (g m int V)``.

    For weak coupling the state is a wide soliton of that length, so the box is
    ``span`` lengths long and the Lions cube is a sixteenth of a length.
    """
    if p.dim != 1:
        raise ValueError("always_binding_probe is one-dimensional")
    S = _integral_V(p)
    if not S > 0:
        raise ValueError("needs a potential with positive integral")
    xi = 4.0 / (g * m * S)
    L = max(64.0, span * xi)
    n = max(256, int(2 ** np.ceil(np.log2(L / h))))
    grid = Grid(1, n, L)
    lam = (g * m * S / 4.0) ** 2
    o = (opts or MinimizeOptions()).with_(
        block=max(1.0, xi / 16), init_width=xi, grad_tol=min(1e-6, 1e-4 * lam)
    )
    return Probe.from_result(g, (minimizer or minimize_mass)(g, m, p, grid, o))


@dataclass
class TransitionReport:
    g_star: float
    bracket: tuple
    order: Order
    evidence: dict
    dim: int
    m: float
    potential: str

    def to_dict(self) -> dict:
        return {
            "g_star": self.g_star,
            "bracket": list(self.bracket),
            "order": self.order.value,
            "dim": self.dim,
            "m": self.m,
            "potential": self.potential,
            "evidence": self.evidence,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def trace_csv(self) -> str:
        rows = [Probe(**r) for r in self.evidence.get("sequence", [])]
        rows += [Probe(**r) for r in self.evidence.get("at_gstar", [])]
        return _probes_csv(rows)


def classify_transition(
    m: float,
    p: Potential,
    grid: Grid,
    seed: int = 0,
    bracket=None,
    rel_tol: float = 1e-5,
    js=(3, 4, 5, 6),
    l4_factor: float = 2.0,
    rho_floor: float = 1e-2,
    hysteresis: float = 0.2,
    opts: MinimizeOptions | None = None,
    weak_couplings=(1e-3, 1e-2, 1e-1),
    minimizer=None,
) -> TransitionReport:
    """Diagnose the order of the binding transition.

    After bracketing ``g*`` to ``rel_tol``, minimizers are followed down
    ``g_j = g*(1 + 2^-j)`` for ``j`` in ``js`` and then to both ends of the
    bracket, each run warm-started from the previous one.  The state at the
    lower end is the limit state at ``g*``.

    Raises :class:`InconclusiveError` with the evidence when neither signature
    is clean.
    """
    minimize = minimizer or minimize_mass
    base = opts or MinimizeOptions()
    base = base.with_(seed=seed, init_noise=base.init_noise or 0.05)
    label = repr(p)
    if grid.dim == 1 and _integral_V(p) > 0:
        probes = [always_binding_probe(g, m, p, opts=base, minimizer=minimize) for g in weak_couplings]
        evidence = {"weak_coupling": [asdict(pr) for pr in probes]}
        if all(pr.e < -1e-10 and pr.status == Status.CONVERGED.value for pr in probes):
            return TransitionReport(0.0, (0.0, min(weak_couplings)), Order.NONE, evidence, 1, m, label)
        raise InconclusiveError("weak-coupling probes did not all bind", evidence)

    gs = find_gstar(m, p, grid, bracket=bracket, rel_tol=rel_tol, opts=base, minimizer=minimize)
    sequence = []
    u = None
    for j in js:
        g = gs.g_star * (1.0 + 2.0 ** (-j))
        o = base if u is None else base.with_(init="provided-field", init_field=u, init_noise=0.0)
        res = minimize(g, m, p, grid, o)
        sequence.append(Probe.from_result(g, res))
        if res.status is not Status.VANISHED:
            u = res.u
    ends = []
    for g in (gs.hi, gs.lo):
        o = base if u is None else base.with_(init="provided-field", init_field=u, init_noise=0.0)
        res = minimize(g, m, p, grid, o)
        ends.append(Probe.from_result(g, res))
        if res.status is not Status.VANISHED:
            u = res.u
    upper, limit = ends
    l4 = [pr.l4_4 for pr in sequence]
    ratio = l4[0] / l4[-1] if l4[-1] > 0 else np.inf
    conc_floor = 2 * base.vanish_tol * np.sqrt(m)
    tol0 = e_zero_tol(0.5 * limit.grad_norm_sq)
    evidence = {
        "gstar_trace": [asdict(pr) for pr in gs.trace],
        "sequence": [asdict(pr) for pr in sequence],
        "at_gstar": [asdict(pr) for pr in ends],
        "l4_ratio": float(ratio),
        "l4_factor": l4_factor,
        "e_zero_tol": tol0,
        "seed": seed,
    }
    first = (
        limit.status == Status.CONVERGED.value
        and abs(limit.energy) <= tol0
        and abs(upper.energy) <= e_zero_tol(0.5 * upper.grad_norm_sq)
        and limit.grad_norm_sq >= rho_floor
        and ratio < l4_factor
        and min(pr.concentration for pr in sequence) >= conc_floor
    )
    # decay toward zero along g_j: monotone within the hysteresis band, by at least l4_factor
    conc = [pr.concentration for pr in sequence]
    steady = all(b <= a * (1 + hysteresis) for a, b in zip(l4, l4[1:]))
    second = ratio >= l4_factor and steady and conc[-1] < conc[0]
    if first == second:
        raise InconclusiveError("transition order inconclusive", evidence)
    order = Order.FIRST if first else Order.SECOND
    return TransitionReport(gs.g_star, (gs.lo, gs.hi), order, evidence, grid.dim, m, label)


@dataclass
class CLRTable:
    g: list
    integral: list
    status: list
    floor: float
    eigenvalues: list = field(default_factory=list)
    energies: list = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return all(v == 0 for v in self.integral)

    @property
    def bounded_below(self) -> bool:
        return not self.degenerate and min(self.integral) >= self.floor

    def to_dict(self) -> dict:
        return asdict(self) | {"bounded_below": self.bounded_below, "degenerate": self.degenerate}


def clr_witness(
    m: float, p: Potential, grid: Grid, g_sequence, opts=None, with_spectrum: bool = False, minimizer=None
) -> CLRTable:
    """``int (V_+ * u_j^2)^{3/2}`` along decreasing couplings with warm starts.

    The floor is half the value at the last (smallest) coupling.  With
    ``with_spectrum`` the lowest eigenvalue of each ``H_j`` is recorded too.
    """
    from .spectrum import clr_integral, lowest_eigenpair

    if grid.dim != 3:
        raise ValueError("the CLR witness is three-dimensional")
    gs_ = [float(g) for g in g_sequence]
    if any(b >= a for a, b in zip(gs_, gs_[1:])):
        raise ValueError("g_sequence must be strictly decreasing")
    opts = opts or MinimizeOptions()
    out = CLRTable([], [], [], 0.0)
    u = None
    for g in gs_:
        o = opts if u is None else opts.with_(init="provided-field", init_field=u)
        res = (minimizer or minimize_mass)(g, m, p, grid, o)
        u = res.u
        out.g.append(g)
        out.integral.append(clr_integral(res.u, p))
        out.status.append(res.status.value)
        out.energies.append(ground_energy(res))
        if with_spectrum:
            out.eigenvalues.append(lowest_eigenpair(res.u, g, p).value)
    out.floor = 0.5 * out.integral[-1]
    return out
