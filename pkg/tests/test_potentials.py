import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from choquard.errors import NoSignChangeError, NonDifferentiablePotentialError, PotentialError
from choquard.grid import Field, Grid, convolve
from choquard.energy import interaction
from choquard.potentials import (
    constant_potential,
    delta_cell,
    eval_F,
    find_rstar,
    gaussian_potential,
    ion_atom,
    load_table_potential,
    parse_potential,
    radial_F,
    split_norms,
    step_1d,
    table_potential,
)


def fd_W(p, x, eps=1e-5):
    """``x . grad V`` by central differences, one axis at a time."""
    out = np.zeros(x.shape[:-1])
    for ax in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[ax] = eps
        out += x[..., ax] * (p.V(x + e) - p.V(x - e)) / (2 * eps)
    return out


DIFFERENTIABLE = [
    ion_atom(1.0, 1),
    ion_atom(1.0, 2),
    ion_atom(0.5, 3),
    ion_atom(2.0, 3),
    gaussian_potential(1.0, 1.0, 1),
    gaussian_potential(2.0, 0.7, 2),
    gaussian_potential(-1.0, 1.5, 3),
]


class TestIonAtom:
    def test_origin(self):
        p = ion_atom(1.0, 3)
        x = np.zeros((1, 3))
        assert p.V(x)[0] == 1.0 and p.W(x)[0] == 0.0

    def test_unit_radius(self):
        p = ion_atom(1.0, 3)
        x = np.array([[1.0, 0.0, 0.0]])
        assert p.V(x)[0] == pytest.approx(0.25) and p.W(x)[0] == pytest.approx(-0.5)

    @pytest.mark.parametrize("b", [0.5, 1.0, 3.0])
    def test_flags(self, b):
        p = ion_atom(b, 2)
        assert p.radial and p.symmetric and p.nonincreasing and not p.test_only
        assert p.V(np.zeros((1, 2)))[0] == pytest.approx(1 / b**4)

    def test_nonpositive_b(self):
        with pytest.raises(PotentialError, match="nonpositive-b"):
            ion_atom(0.0, 3)

    def test_positive_near_origin(self):
        g = Grid(3, 32, 8.0)
        V = ion_atom(1.0, 3).sample(g).values
        assert np.all(V[g.r2 < 1.0] > 0)


class TestGaussian:
    def test_values(self):
        p = gaussian_potential(1.0, 1.0, 1)
        assert p.V(np.array([[0.0]]))[0] == 1.0 and p.W(np.array([[0.0]]))[0] == 0.0
        assert p.V(np.array([[1.0]]))[0] == pytest.approx(np.exp(-0.5))
        assert p.W(np.array([[1.0]]))[0] == pytest.approx(-np.exp(-0.5))

    def test_nonincreasing_flag(self):
        assert gaussian_potential(1.0, 1.0, 2).nonincreasing
        assert not gaussian_potential(-1.0, 1.0, 2).nonincreasing

    def test_nonpositive_s(self):
        with pytest.raises(PotentialError, match="nonpositive-s"):
            gaussian_potential(1.0, 0.0, 1)


class TestW:
    @pytest.mark.parametrize("p", DIFFERENTIABLE, ids=repr)
    def test_finite_differences_1000_points(self, p):
        rng = np.random.default_rng(7)
        x = rng.normal(scale=2.0 * (p.width or 1.0), size=(1000, p.dim))
        W = p.W(x)
        err = np.abs(W - fd_W(p, x))
        assert np.all(err < 1e-6 * (1 + np.abs(W)))

    @given(st.floats(0.2, 4.0), st.integers(1, 3), st.integers(0, 2**16))
    def test_ion_atom_property(self, b, dim, seed):
        p = ion_atom(b, dim)
        x = np.random.default_rng(seed).normal(scale=2 * b, size=(20, dim))
        W = p.W(x)
        assert np.all(np.abs(W - fd_W(p, x)) < 1e-6 * (1 + np.abs(W)))

    @given(st.integers(1, 3), st.integers(0, 2**16))
    def test_radial_and_symmetric(self, dim, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(10, dim))
        q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        for p in (ion_atom(1.0, dim), gaussian_potential(1.0, 1.3, dim)):
            np.testing.assert_allclose(p.V(x @ q.T), p.V(x), rtol=1e-12)
            np.testing.assert_array_equal(p.V(-x), p.V(x))


class TestStep:
    def test_piecewise(self):
        p = step_1d(0.1)
        assert p.V(np.array([[0.05]]))[0] == 1.0
        assert p.V(np.array([[0.5]]))[0] == -2.0
        assert p.V(np.array([[2.0]]))[0] == 0.0
        assert p.symmetric and not p.test_only

    @pytest.mark.parametrize("eps", [0.0, 0.25, -1.0])
    def test_eps_range(self, eps):
        with pytest.raises(PotentialError, match="eps-out-of-range"):
            step_1d(eps)

    def test_not_differentiable(self):
        p = step_1d(0.1)
        with pytest.raises(NonDifferentiablePotentialError):
            eval_F(p, np.array([[0.0]]))


class TestDeltaCell:
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_convolution_identity(self, dim):
        g = Grid(dim, 16, 4.0)
        f = Field(g, np.random.default_rng(dim).normal(size=g.shape))
        out = convolve(delta_cell(dim).sample(g), f)
        np.testing.assert_allclose(out.values, f.values, atol=1e-12)

    def test_interaction(self):
        g = Grid(2, 16, 4.0)
        f = Field(g, np.random.default_rng(0).normal(size=g.shape))
        expect = 0.25 * g.dV * np.sum(f.values**4)
        assert interaction(f, delta_cell(2)) == pytest.approx(expect, rel=1e-12)

    def test_flags(self):
        assert delta_cell(1).test_only


class TestF:
    def test_ion_atom_origin(self):
        assert eval_F(ion_atom(1.0, 2), np.zeros((1, 2)))[0] == pytest.approx(0.5)

    def test_ion_atom_rstar(self):
        assert eval_F(ion_atom(1.0, 2), np.array([[1.0, 0.0]]))[0] == pytest.approx(0.0, abs=1e-15)

    def test_gaussian_zero(self):
        x = np.array([[np.sqrt(2.0), 0.0]])
        assert eval_F(gaussian_potential(1.0, 1.0, 2), x)[0] == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("p", [ion_atom(1.0, 2), gaussian_potential(1.0, 1.0, 2)], ids=repr)
    def test_integrates_to_zero(self, p):
        g = Grid(2, 512, 80.0)
        F = eval_F(p, g.points)
        # the ion-atom F decays like r^-4, leaving ~pi/R^2 outside the box
        assert abs(g.dV * F.sum()) <= 5e-3 * g.dV * np.abs(F).sum()


class TestRstar:
    @pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
    def test_ion_atom(self, b):
        assert find_rstar(ion_atom(b, 2)) == pytest.approx(b, abs=1e-10)

    def test_gaussian(self):
        assert find_rstar(gaussian_potential(1.0, 1.0, 2)) == pytest.approx(np.sqrt(2), abs=1e-10)

    @given(st.floats(0.2, 5.0))
    def test_sign_pattern(self, b):
        p = ion_atom(b, 2)
        r = find_rstar(p)
        rs = np.linspace(0, 10 * b, 500)
        F = radial_F(p, rs)
        assert np.all(F[rs < r * (1 - 1e-9)] > 0)
        assert np.all(F[rs > r * (1 + 1e-9)] < 0)

    def test_no_sign_change(self):
        with pytest.raises(NoSignChangeError):
            find_rstar(gaussian_potential(-1.0, 1.0, 2))


class TestSplitNorms:
    def test_outside_box_is_empty(self):
        g = Grid(3, 16, 8.0)
        _, tail = split_norms(ion_atom(1.0, 3), g, g.L * np.sqrt(3) / 2 + g.h)
        assert tail == 0.0

    def test_tail_decreases(self):
        p = ion_atom(1.0, 3)
        tails = [split_norms(p, Grid(3, 32, L), L / 2)[1] for L in (8.0, 16.0, 32.0)]
        assert tails[0] > tails[1] > tails[2] > 0

    def test_additivity(self):
        g = Grid(3, 32, 12.0)
        p = ion_atom(1.0, 3)
        core, _ = split_norms(p, g, 2.0)
        V = p.sample(g).values
        outside = g.dV * V[g.r2 >= 4.0].sum()
        assert core + outside == pytest.approx(g.dV * V.sum(), rel=1e-12)


class TestParsingAndTables:
    def test_parse(self):
        p = parse_potential("ion_atom:b=2", 3)
        assert p.params["b"] == 2.0 and p.dim == 3
        assert parse_potential("gaussian:a=1,s=0.5", 1).params == {"a": 1.0, "s": 0.5}

    @pytest.mark.parametrize("spec", ["nope", "ion_atom:c=1", "ion_atom:b"])
    def test_parse_errors(self, spec):
        with pytest.raises(PotentialError):
            parse_potential(spec, 3)

    def test_table_matches_analytic(self, tmp_path):
        p = ion_atom(1.0, 3)
        r = np.linspace(0, 20, 20001)
        path = tmp_path / "ion.txt"
        np.savetxt(path, np.column_stack([r, p.profile_V(r), p.profile_W(r)]), header="r V W")
        t = load_table_potential(path, 3)
        x = np.random.default_rng(0).uniform(-3, 3, size=(50, 3))
        np.testing.assert_allclose(t.V(x), p.V(x), atol=1e-6)
        np.testing.assert_allclose(t.W(x), p.W(x), atol=1e-6)

    def test_table_rejects_unsorted(self):
        with pytest.raises(PotentialError):
            table_potential([0, 2, 1], [1, 1, 1], [0, 0, 0], 1)

    def test_constant(self):
        g = Grid(2, 8, 2.0)
        np.testing.assert_array_equal(constant_potential(3.0, 2).sample(g).values, 3.0)
