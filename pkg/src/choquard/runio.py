"""Run persistence: atomic writes, a checksummed probe cache and the manifest.

Every minimization performed by a command-line run goes through
:class:`ProbeCache`.  A probe is keyed by a hash of everything that determines
its outcome (coupling, mass, grid, potential, options and the bytes of the
starting field), so re-running an interrupted job replays finished probes
from disk and recomputes nothing else.  Because the solver is deterministic
the resumed tables are bit-identical to an uninterrupted run.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .energy import EnergyBreakdown
from .errors import ChecksumMismatchError
from .grid import Field, Grid, field_from_bytes, field_to_bytes
from .groundstate import MinimizeOptions, MinimizeResult, Status, minimize_mass
from .potentials import Potential

__all__ = [
    "atomic_write",
    "sha256_bytes",
    "sha256_file",
    "write_json",
    "write_dat",
    "ProbeCache",
    "RunManifest",
]


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    if is_dataclass(o) and not isinstance(o, type):
        return asdict(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, default=_default, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write(path, to_json(obj))


def write_dat(path, header: str, columns) -> None:
    """Whitespace-separated numeric columns with a ``#`` header line."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    lines = ["# " + header]
    for row in zip(*cols):
        lines.append(" ".join(repr(float(v)) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def _options_key(opts: MinimizeOptions) -> dict:
    out = {}
    for f in fields(opts):
        v = getattr(opts, f.name)
        if f.name == "init_field":
            v = None if v is None else sha256_bytes(field_to_bytes(v))
        out[f.name] = v
    return out


def probe_key(g: float, m: float, p: Potential, grid: Grid, opts: MinimizeOptions) -> str:
    payload = {
        "g": repr(float(g)),
        "m": repr(float(m)),
        "grid": [grid.dim, grid.n, repr(float(grid.L))],
        "potential": repr(p),
        "opts": _options_key(opts),
    }
    return sha256_bytes(json.dumps(payload, sort_keys=True, default=repr).encode())[:32]


class ProbeCache:
    """Drop-in replacement for :func:`minimize_mass` that persists each probe.

    With ``reuse=False`` every probe is recomputed (and stored again).
    """

    def __init__(self, directory, reuse: bool = True):
        self.dir = Path(directory)
        self.reuse = reuse
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self.checksums: dict[str, str] = {}

    def _paths(self, key):
        return self.dir / f"{key}.json", self.dir / f"{key}.chqf"

    def load(self, key) -> MinimizeResult | None:
        jpath, fpath = self._paths(key)
        if not jpath.exists():
            return None
        meta = json.loads(jpath.read_text())
        if not fpath.exists():
            raise ChecksumMismatchError(f"checksum-mismatch: missing field dump {fpath.name}")
        data = fpath.read_bytes()
        if sha256_bytes(data) != meta["field_sha256"]:
            raise ChecksumMismatchError(f"checksum-mismatch: {fpath.name}")
        self.checksums[fpath.name] = meta["field_sha256"]
        return MinimizeResult(
            field_from_bytes(data),
            EnergyBreakdown(**meta["energy"]),
            meta["lambda"],
            meta["residual"],
            Status(meta["status"]),
            meta["iterations"],
            meta["diagnostics"],
        )

    def store(self, key, res: MinimizeResult) -> None:
        jpath, fpath = self._paths(key)
        data = field_to_bytes(res.u)
        digest = sha256_bytes(data)
        atomic_write(fpath, data)
        meta = res.to_dict() | {"field_sha256": digest}
        write_json(jpath, meta)
        self.checksums[fpath.name] = digest

    def verify_all(self) -> int:
        """Check every stored dump against its recorded checksum."""
        count = 0
        for jpath in sorted(self.dir.glob("*.json")):
            meta = json.loads(jpath.read_text())
            fpath = jpath.with_suffix(".chqf")
            if not fpath.exists() or sha256_file(fpath) != meta["field_sha256"]:
                raise ChecksumMismatchError(f"checksum-mismatch: {fpath.name}")
            count += 1
        return count

    def __call__(self, g, m, p, grid, opts=None) -> MinimizeResult:
        opts = opts or MinimizeOptions()
        key = probe_key(g, m, p, grid, opts)
        res = self.load(key) if self.reuse else None
        if res is not None:
            self.hits += 1
            return res
        self.misses += 1
        res = minimize_mass(g, m, p, grid, opts)
        self.store(key, res)
        return res


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str = __version__
    started: float = field(default_factory=time.time)
    wall_time: float = 0.0
    checksums: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    complete: bool = False

    def finish(self, out_dir, verdicts: dict | None = None) -> None:
        out_dir = Path(out_dir)
        self.wall_time = time.time() - self.started
        self.verdicts = verdicts or {}
        self.checksums = {
            str(pth.relative_to(out_dir)): sha256_file(pth)
            for pth in sorted(out_dir.rglob("*"))
            if pth.is_file() and pth.name != "manifest.json" and not pth.name.startswith(".")
        }
        self.complete = True
        write_json(out_dir / "manifest.json", asdict(self))

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def verify(self, out_dir) -> None:
        out_dir = Path(out_dir)
        for rel, digest in self.checksums.items():
            pth = out_dir / rel
            if not pth.exists() or sha256_file(pth) != digest:
                raise ChecksumMismatchError(f"checksum-mismatch: {rel}")


def field_checksum(u: Field) -> str:
    return sha256_bytes(field_to_bytes(u))
