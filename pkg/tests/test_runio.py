import json

import numpy as np
import pytest

from choquard.errors import ChecksumMismatchError
from choquard.grid import Grid
from choquard.groundstate import MinimizeOptions
from choquard.potentials import delta_cell
from choquard.runio import (
    ProbeCache,
    RunManifest,
    atomic_write,
    probe_key,
    sha256_file,
    to_json,
    write_dat,
)

GRID = Grid(1, 256, 64.0)
P = delta_cell(1)


class TestWrites:
    def test_atomic_write_leaves_no_temp(self, tmp_path):
        atomic_write(tmp_path / "a" / "x.txt", "hello")
        assert (tmp_path / "a" / "x.txt").read_text() == "hello"
        assert [p.name for p in (tmp_path / "a").iterdir()] == ["x.txt"]

    def test_dat_roundtrip(self, tmp_path):
        write_dat(tmp_path / "t.dat", "g e", [[1.0, 2.0], [-0.1, 1 / 3]])
        arr = np.loadtxt(tmp_path / "t.dat")
        assert arr[1, 1] == 1 / 3
        assert (tmp_path / "t.dat").read_text().startswith("# g e\n")

    def test_json_handles_numpy(self):
        d = json.loads(to_json({"a": np.float64(1.5), "b": np.arange(3)}))
        assert d == {"a": 1.5, "b": [0, 1, 2]}


class TestProbeKey:
    def test_sensitive_to_inputs(self):
        o = MinimizeOptions()
        k = probe_key(1.0, 1.0, P, GRID, o)
        assert k == probe_key(1.0, 1.0, P, GRID, o)
        assert k != probe_key(1.0 + 1e-15, 1.0, P, GRID, o)
        assert k != probe_key(1.0, 1.0, P, Grid(1, 256, 32.0), o)
        assert k != probe_key(1.0, 1.0, P, GRID, o.with_(seed=1))


class TestCache:
    def test_replay_bit_identical(self, tmp_path):
        c = ProbeCache(tmp_path)
        a = c(1.0, 1.0, P, GRID)
        b = ProbeCache(tmp_path)(1.0, 1.0, P, GRID)
        assert np.array_equal(a.u.values, b.u.values)
        assert a.energy == b.energy and a.status == b.status and a.lam == b.lam
        assert c.verify_all() == 1

    def test_no_reuse_recomputes(self, tmp_path):
        ProbeCache(tmp_path)(1.0, 1.0, P, GRID)
        c = ProbeCache(tmp_path, reuse=False)
        c(1.0, 1.0, P, GRID)
        assert c.hits == 0 and c.misses == 1

    def test_corrupted_dump(self, tmp_path):
        ProbeCache(tmp_path)(1.0, 1.0, P, GRID)
        dump = next(tmp_path.glob("*.chqf"))
        raw = bytearray(dump.read_bytes())
        raw[-1] ^= 0xFF
        dump.write_bytes(bytes(raw))
        with pytest.raises(ChecksumMismatchError):
            ProbeCache(tmp_path)(1.0, 1.0, P, GRID)
        with pytest.raises(ChecksumMismatchError):
            ProbeCache(tmp_path).verify_all()


class TestManifest:
    def test_finish_and_verify(self, tmp_path):
        (tmp_path / "r.json").write_text("{}")
        m = RunManifest("groundstate", {"g": 1.0})
        m.finish(tmp_path, {"ok": True})
        loaded = RunManifest.load(tmp_path / "manifest.json")
        assert loaded.complete and loaded.checksums == {"r.json": sha256_file(tmp_path / "r.json")}
        loaded.verify(tmp_path)
        (tmp_path / "r.json").write_text("{ }")
        with pytest.raises(ChecksumMismatchError):
            loaded.verify(tmp_path)
