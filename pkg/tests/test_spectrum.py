import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import G_STAR_3D
from choquard.errors import DimensionMismatchError, NoConvergenceError
from choquard.grid import Field, Grid
from choquard.potentials import delta_cell, gaussian_potential, ion_atom
from choquard.spectrum import (
    Hamiltonian,
    check_ej_bound,
    clr_integral,
    dense_lowest_eigenpair,
    lowest_eigenpair,
    rayleigh_quotient,
)

# the 3D case assembles a 4096 x 4096 matrix, so it runs for one seed only
SMALL = [(1, 64, 12.0, 0), (1, 64, 12.0, 1), (2, 16, 8.0, 0), (2, 16, 8.0, 1), (3, 16, 8.0, 0)]


def blob(grid, seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1, 1, grid.dim)
    x = grid.points - c
    return Field(grid, rng.uniform(0.5, 2.0) * np.exp(-np.sum(x * x, -1) / rng.uniform(1.0, 4.0)))


class TestLanczos:
    @pytest.mark.parametrize("dim,n,L,seed", SMALL)
    def test_matches_dense(self, dim, n, L, seed):
        grid = Grid(dim, n, L)
        u = blob(grid, seed)
        p = gaussian_potential(1.0, 1.0, dim)
        a = lowest_eigenpair(u, 3.0, p)
        b = dense_lowest_eigenpair(u, 3.0, p)
        assert abs(a.value - b.value) < 1e-8
        assert abs(abs(np.sum(a.eigenfunction.values * b.eigenfunction.values)) * grid.dV - 1) < 1e-6

    def test_free_particle(self):
        grid = Grid(2, 16, 8.0)
        r = lowest_eigenpair(Field(grid, np.zeros(grid.shape)), 1.0, ion_atom(1.0, 2))
        assert abs(r.value) < 1e-10
        np.testing.assert_allclose(r.eigenfunction.values, 1 / grid.L, rtol=1e-5)

    def test_poschl_teller(self):
        # -psi''/2 - sech^2(x/4)/16 psi has ground energy -1/32
        grid = Grid(1, 1024, 160.0)
        u = Field(grid, np.sqrt(1 / 8) / np.cosh(grid.points[..., 0] / 4))
        r = lowest_eigenpair(u, 1.0, delta_cell(1))
        assert r.value == pytest.approx(-1 / 32, rel=1e-7)
        assert r.rayleigh_residual <= 1e-8

    def test_budget(self):
        grid = Grid(2, 32, 8.0)
        with pytest.raises(NoConvergenceError):
            lowest_eigenpair(blob(grid, 0), 3.0, ion_atom(1.0, 2), krylov=3, max_restarts=2, eig_tol=1e-14)

    def test_dense_size_limit(self):
        with pytest.raises(ValueError):
            Hamiltonian(blob(Grid(2, 128, 8.0), 0), 1.0, ion_atom(1.0, 2)).dense()

    def test_operator_symmetric(self):
        grid = Grid(2, 16, 8.0)
        H = Hamiltonian(blob(grid, 3), 2.0, ion_atom(1.0, 2))
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(2, grid.size))
        assert x @ H.apply(y).ravel() == pytest.approx(y @ H.apply(x).ravel(), rel=1e-12)


class TestBounds:
    @settings(max_examples=20)
    @given(st.integers(0, 10_000))
    def test_rayleigh_above_eigenvalue(self, seed):
        grid = Grid(2, 16, 8.0)
        u = blob(grid, 0)
        p = ion_atom(1.0, 2)
        e0 = dense_lowest_eigenpair(u, 4.0, p).value
        psi = Field(grid, np.random.default_rng(seed).normal(size=grid.shape))
        assert rayleigh_quotient(psi, u, 4.0, p) >= e0 - 1e-12

    def test_ej_bound_at_minimizer(self, minimizer_15, ion3d):
        chk = check_ej_bound(minimizer_15.u, 1.5 * G_STAR_3D, ion3d)
        assert chk.holds
        assert chk.eigenvalue <= chk.trial_value <= chk.energy_per_mass + 1e-12


class TestCLR:
    def test_cubic_scaling(self):
        grid = Grid(3, 16, 8.0)
        u = blob(grid, 0)
        p = ion_atom(1.0, 3)
        assert clr_integral(Field(grid, 2 * u.values), p) == pytest.approx(8 * clr_integral(u, p), rel=1e-10)

    def test_positive_at_minimizer(self, minimizer_15, ion3d):
        assert clr_integral(minimizer_15.u, ion3d) > 0

    def test_needs_3d(self):
        with pytest.raises(DimensionMismatchError):
            clr_integral(blob(Grid(2, 16, 8.0), 0), ion_atom(1.0, 2))
