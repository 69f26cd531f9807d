import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard.energy import el_residual
from choquard.errors import InsufficientTailError
from choquard.grid import Field, Grid, mass
from choquard.groundstate import (
    MinimizeOptions,
    Status,
    check_strict_scaling,
    check_subadditivity,
    energy_curve,
    ground_energy,
    initial_field,
    minimize_mass,
    tail_decay_report,
)
from choquard.potentials import delta_cell, gaussian_potential, ion_atom

SOLITON_GRID = Grid(1, 1024, 128.0)


@pytest.fixture(scope="module")
def soliton():
    return minimize_mass(1.0, 1.0, delta_cell(1), SOLITON_GRID)


class TestSoliton:
    def test_energy_and_multiplier(self, soliton):
        assert soliton.converged
        assert soliton.energy.total == pytest.approx(-1 / 96, rel=1e-4)
        assert soliton.lam == pytest.approx(1 / 16, rel=1e-3)

    def test_profile(self, soliton):
        x = SOLITON_GRID.points[..., 0]
        exact = np.sqrt(1 / 8) / np.cosh(x / 4)
        assert np.max(np.abs(np.abs(soliton.u.values) - exact)) < 1e-4

    def test_mass_and_residual(self, soliton):
        assert mass(soliton.u) == pytest.approx(1.0, rel=1e-12)
        r = el_residual(soliton.u, 1.0, soliton.lam, delta_cell(1))
        assert np.sqrt(mass(r)) <= 1e-6 * 1.000001

    def test_energy_nonincreasing(self, soliton):
        h = np.array(soliton.history)
        assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))

    def test_deterministic(self, soliton):
        again = minimize_mass(1.0, 1.0, delta_cell(1), SOLITON_GRID)
        assert np.array_equal(again.u.values, soliton.u.values)
        assert again.energy == soliton.energy

    def test_json(self, soliton):
        d = soliton.to_dict()
        assert d["status"] == "Converged" and d["lambda"] == soliton.lam


class TestScalingOracles:
    @given(st.floats(0.5, 2.0))
    @settings(max_examples=5)
    def test_soliton_family(self, m):
        # e(g, m) = -g^2 m^3 / 96 for the cubic 1D problem
        r = minimize_mass(1.0, m, delta_cell(1), Grid(1, 1024, 256.0))
        assert r.energy.total == pytest.approx(-(m**3) / 96, rel=1e-3)

    def test_strict_scaling_1d(self):
        rep = check_strict_scaling(1.0, 1.0, 2.0, delta_cell(1), SOLITON_GRID)
        assert rep.holds
        assert rep.lhs == pytest.approx(-8 / 96, rel=1e-3)
        assert rep.rhs == pytest.approx(-4 / 96, rel=1e-3)

    def test_subadditivity_1d(self):
        rep = check_subadditivity(1.0, 0.7, 0.5, delta_cell(1), SOLITON_GRID)
        assert rep.holds and rep.lhs < rep.rhs

    def test_scaling_rejects_t(self):
        with pytest.raises(ValueError):
            check_strict_scaling(1.0, 1.0, 1.0, delta_cell(1), SOLITON_GRID)


class TestStatuses:
    def test_vanishing_below_threshold(self):
        r = minimize_mass(2.0, 1.0, ion_atom(1.0, 3), Grid(3, 32, 24.0))
        assert r.status is Status.VANISHED
        assert ground_energy(r) == 0.0

    def test_budget(self):
        r = minimize_mass(1.0, 1.0, delta_cell(1), SOLITON_GRID, MinimizeOptions(max_iters=3))
        assert r.status is Status.BUDGET_EXHAUSTED

    def test_positive_energy_reports_zero(self, soliton):
        fake = type(soliton)(soliton.u, soliton.energy.__class__.build(1.0, 0.1, 1.0, 1.0), 0.0, 0.0,
                             Status.CONVERGED, 1)
        assert ground_energy(fake) == 0.0

    @pytest.mark.parametrize("kw", [dict(max_iters=0), dict(grad_tol=0.0), dict(init="x"), dict(init="provided-field")])
    def test_bad_options(self, kw):
        with pytest.raises(ValueError):
            MinimizeOptions(**kw)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            minimize_mass(0.0, 1.0, delta_cell(1), SOLITON_GRID)


class TestInit:
    @given(st.sampled_from(["gaussian-bump", "random"]), st.integers(0, 100), st.floats(0.1, 5.0))
    def test_mass(self, init, seed, m):
        grid = Grid(2, 16, 8.0)
        a = initial_field(grid, m, MinimizeOptions(init=init, seed=seed, init_noise=0.2))
        assert grid.dV * np.sum(a * a) == pytest.approx(m, rel=1e-12)

    def test_seed_changes_random(self):
        grid = Grid(2, 16, 8.0)
        a = initial_field(grid, 1.0, MinimizeOptions(init="random", seed=0))
        b = initial_field(grid, 1.0, MinimizeOptions(init="random", seed=1))
        assert not np.array_equal(a, b)


class TestCurve:
    def test_nonincreasing_1d(self):
        p = gaussian_potential(1.0, 1.0, 1)
        c = energy_curve([0.5, 1.0, 2.0, 4.0], 1.0, p, Grid(1, 512, 128.0))
        assert all(b <= a + 1e-10 for a, b in zip(c.e, c.e[1:]))
        assert all(e < 0 for e in c.e)

    def test_requires_increasing(self):
        with pytest.raises(ValueError):
            energy_curve([2.0, 1.0], 1.0, delta_cell(1), SOLITON_GRID)


class TestTail:
    def test_exponential_rate(self):
        grid = Grid(1, 1024, 128.0)
        u = Field(grid, np.exp(-0.3 * np.abs(grid.points[..., 0])))
        rep = tail_decay_report(u, 0.09)
        assert rep.rate == pytest.approx(0.3, rel=1e-6) and rep.satisfied

    def test_minimizer_tail(self, minimizer_15):
        rep = tail_decay_report(minimizer_15.u, minimizer_15.lam)
        assert rep.satisfied is not False and rep.rate >= rep.bound

    def test_empty_shell(self):
        grid = Grid(1, 64, 16.0)
        with pytest.raises(InsufficientTailError):
            tail_decay_report(Field(grid, np.exp(-grid.r2 * 50)), 1.0)
