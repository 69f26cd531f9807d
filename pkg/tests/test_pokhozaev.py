import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import G_STAR_3D
from choquard.errors import DimensionMismatchError, NoSignChangeError
from choquard.grid import Field, Grid, mass
from choquard.groundstate import MinimizeOptions, minimize_mass
from choquard.pokhozaev import (
    autocorrelation,
    autocorrelation_monotone_check,
    pokhozaev_residual,
    two_d_F_pairing,
    virial_residual,
)
from choquard.potentials import gaussian_potential, ion_atom

GRID2 = Grid(2, 64, 16.0)


def radial_trial(grid, widths, weights):
    """Positive combination of centred Gaussians: radial and nonincreasing."""
    a = sum(w * np.exp(-grid.r2 / (2 * s * s)) for s, w in zip(widths, weights))
    return Field(grid, a)


@pytest.fixture(scope="module")
def soliton_gauss():
    grid = Grid(1, 1024, 128.0)
    p = gaussian_potential(1.0, 0.5, 1)
    return minimize_mass(1.0, 1.0, p, grid, MinimizeOptions(grad_tol=1e-9)), p


class TestResidual:
    def test_1d_critical_point(self, soliton_gauss):
        r, p = soliton_gauss
        rep = pokhozaev_residual(r.u, r.lam, 1.0, p)
        assert rep.relative_residual < 1e-6 and rep.nonnegative

    def test_1d_virial(self, soliton_gauss):
        r, p = soliton_gauss
        grad2, rhs, rel = virial_residual(r.u, 1.0, p)
        assert rel < 1e-6 and grad2 > 0

    def test_3d_minimizer(self, minimizer_15, ion3d):
        rep = pokhozaev_residual(minimizer_15.u, minimizer_15.lam, 1.5 * G_STAR_3D, ion3d)
        assert rep.relative_residual < 1e-3
        assert rep.kinetic_term > 0 and rep.w_term < 0

    def test_noncritical_field_fails(self):
        u = radial_trial(GRID2, [1.0], [1.0])
        rep = pokhozaev_residual(u, 0.3, 2.0, ion_atom(1.0, 2))
        assert rep.relative_residual > 1e-2

    def test_components(self):
        u = radial_trial(GRID2, [1.0, 2.0], [1.0, 0.3])
        rep = pokhozaev_residual(u, 0.3, 2.0, ion_atom(1.0, 2))
        k, m_, w, v = rep.components
        assert rep.lhs == pytest.approx(k + m_) and rep.rhs == pytest.approx(w + v)
        assert k == 0.0  # (d-2)/2 vanishes in 2D

    def test_sign_flag(self):
        u = Field(GRID2, -radial_trial(GRID2, [1.0], [1.0]).values + 0.01)
        assert not pokhozaev_residual(u, 0.1, 1.0, ion_atom(1.0, 2)).nonnegative


class TestFPairing:
    @settings(max_examples=50)
    @given(
        st.lists(st.floats(0.2, 3.0), min_size=1, max_size=3),
        st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3),
        st.sampled_from([0.5, 1.0, 2.0]),
    )
    def test_positive_on_radial_trials(self, widths, weights, b):
        u = radial_trial(GRID2, widths, weights)
        assert two_d_F_pairing(u, ion_atom(b, 2)) > 0

    def test_needs_2d(self):
        with pytest.raises(DimensionMismatchError):
            two_d_F_pairing(Field(Grid(3, 8, 4.0), np.ones((8, 8, 8))), ion_atom(1.0, 3))

    def test_needs_sign_change(self):
        with pytest.raises(NoSignChangeError):
            two_d_F_pairing(radial_trial(GRID2, [1.0], [1.0]), gaussian_potential(-1.0, 1.0, 2))


class TestAutocorrelation:
    def test_total_is_mass_squared(self):
        u = radial_trial(GRID2, [1.0, 2.5], [1.0, 0.2])
        h = autocorrelation(u)
        assert GRID2.dV * h.sum() == pytest.approx(mass(u) ** 2, rel=1e-10)

    def test_peak_at_zero_shift(self):
        u = radial_trial(GRID2, [1.5], [1.0])
        h = autocorrelation(u)
        assert np.unravel_index(np.argmax(h), h.shape) == (GRID2.n, GRID2.n)

    @settings(max_examples=20)
    @given(st.integers(0, 10_000))
    def test_monotone_after_rearrangement(self, seed):
        grid = Grid(2, 32, 8.0)
        rng = np.random.default_rng(seed)
        u = Field(grid, rng.normal(size=grid.shape) * np.exp(-grid.r2 / 8))
        assert autocorrelation_monotone_check(u).monotone
