"""Command-line front end: configuration, orchestration and artifact output.

Every subcommand writes into ``--out``: JSON reports, CSV tables, ``.dat``
files with a ``#`` header for plotting, CHQF field dumps and, last of all,
``manifest.json`` with the configuration echo and checksums of every file.

Configuration comes from defaults, then an optional ``--config`` file
(``key = value`` lines in sections), then command-line flags.  Unknown
sections or keys are rejected before anything is computed.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ChecksumMismatchError, ChoquardError, ConfigError, GridError, PotentialError
from .grid import Grid, dump_field, load_field
from .groundstate import MinimizeOptions, ground_energy
from .potentials import parse_potential
from .runio import ProbeCache, RunManifest, atomic_write, to_json, write_dat, write_json

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

COMMANDS = ("groundstate", "sweep", "gstar", "classify", "pokhozaev", "spectrum", "metastable", "selftest")

RUN_KEYS = {
    "dim": int,
    "n": int,
    "L": float,
    "potential": str,
    "g": float,
    "g_range": str,
    "m": float,
    "seed": int,
    "out": str,
    "workers": int,
}


def _bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_float(v: str):
    return None if str(v).strip().lower() in ("", "none") else float(v)


def _ints(v: str) -> tuple:
    return tuple(int(x) for x in str(v).replace(",", " ").split())


def _floats(v: str) -> tuple:
    return tuple(float(x) for x in str(v).replace(",", " ").split())


SECTION_KEYS = {
    "minimize": {
        "max_iters": int,
        "dt0": _opt_float,
        "grad_tol": float,
        "vanish_tol": float,
        "init": str,
        "init_noise": float,
        "init_width": _opt_float,
        "block": float,
        "dt_max": float,
        "dt_grow": float,
        "vanish_window": int,
        "recenter_every": int,
        "explicit": _bool,
        "radial": _bool,
    },
    "gstar": {"lo": float, "hi": float, "rel_tol": float, "tol_g": _opt_float, "max_expand": int},
    "classify": {"rel_tol": float, "js": _ints, "l4_factor": float, "rho_floor": float, "init_noise": float},
    "input": {"field": str, "lam": _opt_float, "init": str},
    "metastable": {"mode": str, "g_star": _opt_float, "rho0": _opt_float, "rho1": _opt_float, "band": float},
    "saddle": {
        "K": int,
        "max_sweeps": int,
        "saddle_tol": _opt_float,
        "step": float,
        "climb_window": int,
        "climb_drift": float,
        "s_min": float,
        "box_factor": int,
        "polish_iters": int,
    },
    "spectrum": {"eig_tol": float, "krylov": int},
}


@dataclass
class RunConfig:
    """Validated run configuration."""

    command: str
    dim: int = 3
    n: int = 64
    L: float = 24.0
    potential: str = "ion_atom:b=1"
    g: float | None = None
    g_range: str | None = None
    m: float = 1.0
    seed: int = 0
    out: str = "run"
    workers: int = 1
    resume: bool = False
    sections: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def grid(self) -> Grid:
        return Grid(self.dim, self.n, self.L)

    def pot(self):
        return parse_potential(self.potential, self.dim)

    def couplings(self) -> list[float]:
        if not self.g_range:
            if self.g is None:
                raise ConfigError("config-invalid: g or g_range is required")
            return [self.g]
        parts = self.g_range.split(":")
        if len(parts) != 3:
            raise ConfigError(f"config-invalid: g_range must be lo:hi:steps, got {self.g_range!r}")
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
        if not (0 < lo < hi) or steps < 2:
            raise ConfigError(f"config-invalid: bad g_range {self.g_range!r}")
        return [float(x) for x in np.linspace(lo, hi, steps)]

    def minimize_options(self) -> MinimizeOptions:
        kw = self.section("minimize")
        kw.setdefault("seed", self.seed)
        return MinimizeOptions(**kw)

    def echo(self) -> dict:
        """Everything that determines the results (not how they are scheduled)."""
        d = asdict(self)
        for k in ("command", "resume", "workers"):
            d.pop(k)
        return d

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"config-invalid: unknown command {self.command!r}")
        try:
            self.grid()
            if self.command != "selftest":
                self.pot()
            self.minimize_options()
        except (GridError, PotentialError, ValueError, TypeError) as exc:
            raise ConfigError(f"config-invalid: {exc}") from exc
        if not self.m > 0:
            raise ConfigError("config-invalid: m must be positive")
        if self.workers < 1:
            raise ConfigError("config-invalid: workers must be >= 1")
        if self.g_range:
            self.couplings()


def _coerce(section: str, key: str, value):
    table = RUN_KEYS if section == "run" else SECTION_KEYS.get(section)
    if table is None:
        raise ConfigError(f"config-invalid: unknown section [{section}]")
    if key not in table:
        raise ConfigError(f"config-invalid: unknown key {key!r} in [{section}]")
    try:
        return table[key](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config-invalid: bad value for {key!r}: {value!r}") from exc


def read_config_file(path) -> dict:
    """Parse a sectioned ``key = value`` file into ``{section: {key: value}}``."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config-invalid: no such file {path}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config-invalid: {exc}") from exc
    out = {}
    for sec in cp.sections():
        out[sec] = {k: _coerce(sec, k, v) for k, v in cp.items(sec)}
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sectioned key = value file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker processes (default $CHOQUARD_WORKERS or 1)")
    common.add_argument("--seed", type=int)
    common.add_argument("--dim", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--L", type=float)
    common.add_argument("--potential", help="NAME:key=value,... e.g. ion_atom:b=1")
    common.add_argument("--g", type=float)
    common.add_argument("--g-range", dest="g_range", help="lo:hi:steps")
    common.add_argument("--m", type=float)
    common.add_argument("--resume", action="store_true", help="reuse finished probes from --out")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="choquard", description="Mass-constrained nonlocal ground states.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("groundstate", parents=[common], help="minimize at one or more couplings")
    sub.add_parser("sweep", parents=[common], help="e(g, m) along --g-range, one cold start per coupling")
    p = sub.add_parser("gstar", parents=[common], help="bisect for the critical coupling")
    p.add_argument("--bracket", help="lo:hi starting bracket")
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p = sub.add_parser("classify", parents=[common], help="order of the binding transition")
    p.add_argument("--bracket", help="lo:hi starting bracket")
    p = sub.add_parser("pokhozaev", parents=[common], help="identity residual of a field dump")
    p.add_argument("--field", help="CHQF dump")
    p.add_argument("--lam", type=float, help="multiplier (default: from the field)")
    p = sub.add_parser("spectrum", parents=[common], help="lowest eigenpair of the linearized operator")
    p.add_argument("--field", help="CHQF dump")
    p = sub.add_parser("metastable", parents=[common], help="local minimizers, saddles, thresholds")
    p.add_argument("--mode", choices=("local", "saddle", "g2", "rho0"))
    p.add_argument("--field", help="CHQF dump used as start (local) or endpoint u1 (saddle)")
    p.add_argument("--g-star", dest="g_star", type=float, help="coupling at which rho0 is evaluated")
    p.add_argument("--rho1", type=float)
    p = sub.add_parser("selftest", parents=[common], help="run the quick invariant suites")
    p.add_argument("--full", action="store_true", help="include the slower suites")
    return ap


_SECTION_FLAGS = {
    "bracket": None,
    "rel_tol": ("gstar", "rel_tol"),
    "field": ("input", "field"),
    "lam": ("input", "lam"),
    "mode": ("metastable", "mode"),
    "g_star": ("metastable", "g_star"),
    "rho1": ("metastable", "rho1"),
}


def make_config(args: argparse.Namespace, env=None) -> RunConfig:
    env = os.environ if env is None else env
    file_cfg = read_config_file(args.config) if args.config else {}
    run = dict(file_cfg.pop("run", {}))
    sections = {k: dict(v) for k, v in file_cfg.items()}
    if "workers" not in run and env.get("CHOQUARD_WORKERS"):
        run["workers"] = _coerce("run", "workers", env["CHOQUARD_WORKERS"])
    for key in RUN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            run[key] = v
    for flag, target in _SECTION_FLAGS.items():
        v = getattr(args, flag, None)
        if v is None or target is None:
            continue
        sections.setdefault(target[0], {})[target[1]] = v
    bracket = getattr(args, "bracket", None)
    if bracket:
        try:
            lo, hi = (float(x) for x in bracket.split(":"))
        except ValueError as exc:
            raise ConfigError(f"config-invalid: bracket must be lo:hi, got {bracket!r}") from exc
        sections.setdefault("gstar", {}).update(lo=lo, hi=hi)
    cfg = RunConfig(command=args.command, resume=bool(args.resume), sections=sections, **run)
    cfg.validate()
    return cfg


def _probe_worker(job):
    """One isolated cold-start probe (runs in a worker process)."""
    from .groundstate import minimize_mass

    g, m, p_spec, dim, n, L, opts = job
    return minimize_mass(g, m, parse_potential(p_spec, dim), Grid(dim, n, L), opts)


class Runner:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cache = ProbeCache(self.out / "probes", reuse=cfg.resume)
        self.verdicts: dict = {}

    # helpers

    def field_path(self, required: bool = True):
        path = self.cfg.section("input").get("field")
        if path is None and required:
            raise ConfigError("config-invalid: this command needs --field")
        return path

    def g_required(self) -> float:
        if self.cfg.g is None:
            raise ConfigError("config-invalid: this command needs --g")
        return self.cfg.g

    def _load_input(self):
        u = load_field(self.field_path())
        grid = u.grid
        if (grid.dim, grid.n, grid.L) != (self.cfg.dim, self.cfg.n, self.cfg.L):
            log.info("using the grid of the field dump: %s", grid)
        return u

    # subcommands

    def groundstate(self):
        cfg = self.cfg
        grid, p, opts = cfg.grid(), cfg.pot(), cfg.minimize_options()
        init = cfg.section("input").get("init") or cfg.section("input").get("field")
        if init:
            opts = opts.with_(init="provided-field", init_field=load_field(init))
        rows = []
        for g in cfg.couplings():
            res = self.cache(g, cfg.m, p, grid, opts)
            tag = f"g{g!r}"
            write_json(self.out / f"groundstate_{tag}.json", res.to_dict() | {"g": g, "m": cfg.m, "e": ground_energy(res)})
            dump_field(res.u, self.out / f"groundstate_{tag}.chqf")
            rows.append((g, ground_energy(res), res.status.value))
            self.verdicts[tag] = res.status.value
        write_dat(self.out / "energy.dat", "g e", [[r[0] for r in rows], [r[1] for r in rows]])
        return all(r[2] != "BudgetExhausted" for r in rows)

    def sweep(self):
        cfg = self.cfg
        grid, p, opts = cfg.grid(), cfg.pot(), cfg.minimize_options()
        gs = cfg.couplings()
        results = self._probes(gs, grid, p, opts)
        lines = ["g,e,energy,lambda,residual,status,iterations,l4_4,concentration"]
        for g, r in zip(gs, results):
            d = r.diagnostics
            lines.append(
                f"{g!r},{ground_energy(r)!r},{r.energy.total!r},{r.lam!r},{r.residual!r},"
                f"{r.status.value},{r.iterations},{d.get('l4_4')!r},{d.get('concentration')!r}"
            )
        atomic_write(self.out / "sweep.csv", "\n".join(lines) + "\n")
        es = [ground_energy(r) for r in results]
        write_dat(self.out / "sweep.dat", "g e", [gs, es])
        mono = all(b <= a + 1e-6 for a, b in zip(es, es[1:]))
        self.verdicts["nonincreasing"] = mono
        write_json(self.out / "sweep.json", {"g": gs, "e": es, "status": [r.status.value for r in results], "nonincreasing": mono})
        return True

    def _probes(self, gs, grid, p, opts):
        """Cold-start probes; cached ones are replayed, the rest run in a pool."""
        from .runio import probe_key

        keys = [probe_key(g, self.cfg.m, p, grid, opts) for g in gs]
        results = [self.cache.load(k) if self.cache.reuse else None for k in keys]
        todo = [i for i, r in enumerate(results) if r is None]
        jobs = [(gs[i], self.cfg.m, self.cfg.potential, grid.dim, grid.n, grid.L, opts) for i in todo]
        if self.cfg.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.cfg.workers) as pool:
                fresh = pool.map(_probe_worker, jobs)
                # single writer: results are stored here, in coupling order
                for i, res in zip(todo, fresh):
                    self.cache.store(keys[i], res)
                    results[i] = res
        else:
            for i, job in zip(todo, jobs):
                res = _probe_worker(job)
                self.cache.store(keys[i], res)
                results[i] = res
        return results

    def _gstar_kwargs(self):
        sec = self.cfg.section("gstar")
        kw = {}
        if "lo" in sec or "hi" in sec:
            kw["bracket"] = (sec.get("lo", 1.0), sec.get("hi", 2.0))
        return kw, sec

    def gstar(self):
        from .transition import find_gstar

        cfg = self.cfg
        kw, sec = self._gstar_kwargs()
        for k in ("rel_tol", "tol_g", "max_expand"):
            if k in sec:
                kw[k] = sec[k]
        res = find_gstar(cfg.m, cfg.pot(), cfg.grid(), opts=cfg.minimize_options(), minimizer=self.cache, **kw)
        write_json(self.out / "gstar.json", res.to_dict())
        atomic_write(self.out / "trace.csv", res.trace_csv())
        tr = sorted(res.trace, key=lambda q: q.g)
        write_dat(self.out / "gstar.dat", "g e", [[q.g for q in tr], [q.e for q in tr]])
        self.verdicts.update(g_star=res.g_star, width=res.width, monotone=res.monotone())
        return True

    def classify(self):
        from .errors import InconclusiveError
        from .transition import classify_transition

        cfg = self.cfg
        kw, _ = self._gstar_kwargs()
        sec = self.cfg.section("classify")
        init_noise = sec.pop("init_noise", None)
        opts = cfg.minimize_options()
        if init_noise is not None:
            opts = opts.with_(init_noise=init_noise)
        try:
            rep = classify_transition(
                cfg.m, cfg.pot(), cfg.grid(), seed=cfg.seed, opts=opts, minimizer=self.cache, **kw, **sec
            )
        except InconclusiveError as exc:
            write_json(self.out / "transition.json", {"order": None, "error": str(exc), "evidence": exc.trace})
            raise
        write_json(self.out / "transition.json", rep.to_dict())
        atomic_write(self.out / "trace.csv", rep.trace_csv())
        self.verdicts["order"] = rep.order.value
        return True

    def pokhozaev(self):
        from .energy import lagrange_multiplier
        from .pokhozaev import pokhozaev_residual, virial_residual

        u = self._load_input()
        p = parse_potential(self.cfg.potential, u.grid.dim)
        g = self.g_required()
        lam = self.cfg.section("input").get("lam")
        if lam is None:
            lam = lagrange_multiplier(u, g, p)
        rep = pokhozaev_residual(u, lam, g, p)
        grad2, rhs, rel = virial_residual(u, g, p)
        write_json(
            self.out / "pokhozaev.json",
            rep.to_dict() | {"g": g, "lambda": lam, "virial": {"grad_norm_sq": grad2, "w_side": rhs, "relative": rel}},
        )
        self.verdicts["relative_residual"] = rep.relative_residual
        return True

    def spectrum(self):
        from .spectrum import check_ej_bound, lowest_eigenpair

        u = self._load_input()
        p = parse_potential(self.cfg.potential, u.grid.dim)
        g = self.g_required()
        sec = self.cfg.section("spectrum")
        eig = lowest_eigenpair(u, g, p, eig_tol=sec.get("eig_tol", 1e-8), krylov=sec.get("krylov", 60), seed=self.cfg.seed)
        bound = check_ej_bound(u, g, p)
        write_json(self.out / "eigen.json", eig.to_dict() | {"g": g, "ej_bound": bound.to_dict()})
        dump_field(eig.eigenfunction, self.out / "eigenfunction.chqf")
        self.verdicts["eigenvalue"] = eig.value
        return True

    def metastable(self):
        from . import metastable as ms

        cfg = self.cfg
        sec = cfg.section("metastable")
        mode = sec.get("mode") or "g2"
        p, grid = cfg.pot(), cfg.grid()
        if mode == "g2":
            g2 = ms.nonexistence_threshold_g2(cfg.m, p)
            write_json(self.out / "g2.json", {"g2": g2, "m": cfg.m, "w_norm_3_2": ms.w_norm(p)})
            self.verdicts["g2"] = g2
            return True
        g = self.g_required()
        if mode == "rho0":
            g_t = sec.get("g_star") or g
            rho0 = ms.compute_rho0(g_t, cfg.m, p, grid)
            write_json(self.out / "rho0.json", {"rho0": rho0, "g_tilde": g_t, "m": cfg.m})
            self.verdicts["rho0"] = rho0
            return True
        if mode == "local":
            rho0 = sec.get("rho0") or ms.compute_rho0(sec.get("g_star") or g, cfg.m, p, grid)
            path = self.field_path(required=False)
            init = load_field(path) if path else None
            try:
                res = ms.local_minimize(g, cfg.m, p, grid, rho0, cfg.minimize_options(), init=init, band=sec.get("band", 0.1))
            except ChoquardError as exc:
                r = getattr(exc, "result", None)
                if r is not None:
                    write_json(self.out / "local.json", r.to_dict() | {"g": g, "rho0": rho0, "error": str(exc)})
                raise
            write_json(self.out / "local.json", res.to_dict() | {"g": g, "rho0": rho0})
            dump_field(res.u, self.out / "local.chqf")
            self.verdicts["local_energy"] = res.energy.total
            return True
        if mode == "saddle":
            rho1 = sec.get("rho1")
            if rho1 is None:
                raise ConfigError("config-invalid: saddle mode needs --rho1")
            u1 = self._load_input()
            opts = ms.SaddleOptions(seed=cfg.seed, **cfg.section("saddle"))
            try:
                res = ms.mountain_pass(g, cfg.m, p, u1.grid, rho1, u1, opts)
            except ChoquardError as exc:
                r = getattr(exc, "result", None)
                if r is not None:
                    self._write_saddle(r)
                raise
            self._write_saddle(res)
            self.verdicts["c_mp"] = res.c_mp
            return True
        raise ConfigError(f"config-invalid: unknown metastable mode {mode!r}")

    def _write_saddle(self, res):
        write_json(self.out / "saddle.json", res.to_dict())
        atomic_write(self.out / "path.csv", res.path.profile_csv())
        K = res.path.K
        write_dat(self.out / "path.dat", "t energy", [[k / K for k in range(K + 1)], res.path.energies])
        dump_field(res.u, self.out / "saddle.chqf")

    def selftest(self, full: bool = False):
        from .selftest import run_suites

        report = run_suites(full=full)
        for name, (ok, detail) in report.items():
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        write_json(self.out / "selftest.json", {k: {"ok": v[0], "detail": v[1]} for k, v in report.items()})
        self.verdicts.update({k: v[0] for k, v in report.items()})
        return all(v[0] for v in report.values())


def run(command: str, cfg: RunConfig, full: bool = False) -> int:
    """Execute one subcommand; returns the process exit code."""
    out = Path(cfg.out)
    mpath = out / "manifest.json"
    if cfg.resume and mpath.exists():
        old = RunManifest.load(mpath)
        old_cfg = {k: v for k, v in old.config.items() if k != "workers"}
        if old.complete and old.command == command and old_cfg == _jsonable(cfg.echo()):
            old.verify(out)
            log.info("run already complete, nothing to do")
            return EXIT_OK
    manifest = RunManifest(command, _jsonable(cfg.echo() | {"workers": cfg.workers}))
    runner = Runner(cfg)
    if command == "selftest":
        ok = runner.selftest(full)
    else:
        ok = getattr(runner, command)()
    manifest.finish(out, runner.verdicts | {"ok": ok})
    return EXIT_OK if ok else EXIT_FAILED


def _jsonable(obj):
    import json

    return json.loads(to_json(obj))


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(args.command, cfg, full=getattr(args, "full", False))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChecksumMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ChoquardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
