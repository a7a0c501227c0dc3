import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsbloch.errors import PoleHitError
from bsbloch.model import Orbital, Spectrum, tensor_h0
from bsbloch.numerics import QuadratureGrid, gauss_legendre
from bsbloch.potential import (
    ConstantTerm,
    EnergyDependentPotential,
    PhotonKernel,
    PhotonTerm,
    Profile,
    RationalTerm,
    apply_function_of_heff,
    derivative,
    evaluate,
)

ONE_NODE = QuadratureGrid(nodes=[1.0], weights=[1.0])


def single_state_kernel(**overrides):
    kw = dict(grid=ONE_NODE, profile=Profile("constant"), coupling=[[1.0]],
              gamma=0.0, eps_first=[0.0], eps_second=[0.0],
              sign_first=[1.0], sign_second=[1.0])
    kw.update(overrides)
    return PhotonKernel(**kw)


def photon_potential(kernel):
    return EnergyDependentPotential((PhotonTerm(kernel),))


@pytest.fixture
def mixed_potential(rng):
    w1 = rng.normal(size=(3, 3))
    w2 = rng.normal(size=(3, 3))
    return EnergyDependentPotential((
        ConstantTerm(w1),
        RationalTerm(w2, pole=-2.0, power=2),
    ))


class TestEvaluate:
    def test_constant_is_energy_independent(self, rng):
        w = rng.normal(size=(2, 2))
        pot = EnergyDependentPotential((ConstantTerm(w),))
        np.testing.assert_array_equal(evaluate(pot, 0.3), w)
        np.testing.assert_array_equal(evaluate(pot, -5.0), w)

    def test_photon_single_node_all_zero_energies(self):
        pot = photon_potential(single_state_kernel())
        assert evaluate(pot, 0.0)[0, 0] == pytest.approx(-2.0, abs=1e-15)

    def test_photon_hand_substitution(self):
        # bra pair (0.1, 0.3), ket pair (0.4, 0.2), E = 0.5, k = 1
        bra = (Orbital(0, 0.1), Orbital(1, 0.3))
        ket = (Orbital(2, 0.4), Orbital(3, 0.2))
        s = Spectrum(basis_labels=("bra", "ket"), h0_diagonal=[0.4, 0.6],
                     orbital_pairs=(bra, ket))
        pot = photon_potential(PhotonKernel.from_spectrum(s, ONE_NODE, np.ones((2, 2))))
        expected = 1.0 / (0.5 - 0.1 - 0.2 - 1.0) + 1.0 / (0.5 - 0.3 - 0.4 - 1.0)
        assert evaluate(pot, 0.5)[0, 1] == pytest.approx(expected, abs=1e-15)

    def test_photon_hole_orbital_sign_flip(self):
        bra = (Orbital(0, -1.0), Orbital(1, 0.2))
        ket = (Orbital(2, 0.2), Orbital(3, 0.5))
        s = Spectrum(basis_labels=("bra", "ket"), h0_diagonal=[-0.8, 0.7],
                     orbital_pairs=(bra, ket))
        pot = photon_potential(PhotonKernel.from_spectrum(s, ONE_NODE, np.ones((2, 2))))
        assert evaluate(pot, 0.0)[0, 1] == pytest.approx(1 / 1.5 - 1 / 1.4, abs=1e-15)

    def test_degenerate_denominator_closed_form(self):
        grid = gauss_legendre(20, 0.8, 2.5)
        eps = 0.4
        orb = Orbital(0, eps)
        s = Spectrum(basis_labels=("x",), h0_diagonal=[2 * eps],
                     orbital_pairs=((orb, orb),))
        pot = photon_potential(PhotonKernel.from_spectrum(s, grid, np.array([[0.9]])))
        closed = -2.0 * np.sum(grid.weights / grid.nodes) * 0.9
        assert evaluate(pot, 2 * eps)[0, 0] == pytest.approx(closed, abs=1e-12)

    def test_sum_of_terms_is_linear(self, mixed_potential):
        total = evaluate(mixed_potential, 0.4)
        parts = sum(t.evaluate(0.4) for t in mixed_potential.terms)
        np.testing.assert_array_equal(total, parts)

    def test_rational_pole_hit(self):
        pot = EnergyDependentPotential((RationalTerm(np.eye(1), pole=-2.0),))
        with pytest.raises(PoleHitError):
            evaluate(pot, -2.0)

    def test_photon_pole_hit_names_node(self):
        pot = photon_potential(single_state_kernel())
        with pytest.raises(PoleHitError) as err:
            evaluate(pot, 1.0)  # E - 0 - 0 - k = 0 at the node
        assert err.value.detail["node"] == pytest.approx(1.0)

    def test_damped_kernel_is_complex_and_pole_free(self):
        pot = photon_potential(single_state_kernel(gamma=0.2))
        value = evaluate(pot, 1.0)
        assert np.iscomplexobj(value)
        expected = 2.0 / (1.0 - (1.0 - 0.2j))
        assert value[0, 0] == pytest.approx(expected, abs=1e-15)

    def test_profiles(self):
        gauss = Profile("gaussian", scale=2.0, center=1.0, width=0.5)
        assert gauss(1.0) == pytest.approx(2.0)
        assert gauss(1.5) == pytest.approx(2.0 * np.exp(-0.5))
        lor = Profile("lorentzian", center=1.0, width=0.5)
        assert lor(1.0) == pytest.approx(1.0)
        assert lor(1.5) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            Profile("box")


class TestDerivative:
    def test_constant_derivative_vanishes(self):
        pot = EnergyDependentPotential((ConstantTerm(np.eye(2)),))
        np.testing.assert_array_equal(derivative(pot, 0.7, 1), np.zeros((2, 2)))

    def test_rational_first_derivative(self):
        pot = EnergyDependentPotential((RationalTerm(np.eye(1), pole=-2.0),))
        assert derivative(pot, 0.0, 1)[0, 0] == pytest.approx(-0.25, abs=1e-15)

    def test_photon_first_derivative(self):
        pot = photon_potential(single_state_kernel())
        assert derivative(pot, 0.0, 1)[0, 0] == pytest.approx(-2.0, abs=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(energy=st.floats(-1.0, 1.0, allow_nan=False))
    def test_matches_central_finite_difference(self, energy):
        w = np.array([[0.4, -0.2], [0.1, 0.8]])
        orbs = ([Orbital(0, 0.05), Orbital(1, 0.35)], [Orbital(0, 0.1)])
        s = tensor_h0(*orbs)
        kernel = PhotonKernel.from_spectrum(
            s, gauss_legendre(6, 4.0, 6.0), w,
            profile=Profile("gaussian", center=5.0, width=1.0))
        pot = EnergyDependentPotential((
            ConstantTerm(w),
            RationalTerm(w.T, pole=-4.0, power=2),
            PhotonTerm(kernel),
        ))
        h = 1e-5
        fd = (evaluate(pot, energy + h) - evaluate(pot, energy - h)) / (2 * h)
        an = derivative(pot, energy, 1)
        scale = 1.0 + np.linalg.norm(evaluate(pot, energy))
        assert np.max(np.abs(an - fd)) <= 1e-7 * scale

    def test_higher_orders_consistent_with_rational_formula(self):
        pot = EnergyDependentPotential((RationalTerm(np.eye(1), pole=1.0, power=3),))
        # d^2/dE^2 (E-1)^-3 = 12 (E-1)^-5
        assert derivative(pot, 2.0, 2)[0, 0] == pytest.approx(12.0, abs=1e-12)


class TestApplyFunctionOfHeff:
    def test_scalar_model_space_reduces_to_evaluate(self):
        pot = EnergyDependentPotential((RationalTerm(np.array([[1.0]]), pole=-2.0),))
        e_star = -1 + np.sqrt(1.5)
        out = apply_function_of_heff(pot, np.array([[e_star]]), np.array([[1.0]]))
        assert out[0, 0] == pytest.approx(1.0 / (e_star + 2.0), abs=1e-14)

    def test_degenerate_heff_reduces_to_scalar_energy(self, mixed_potential, rng):
        b = rng.normal(size=(3, 2))
        e0 = 0.3
        out = apply_function_of_heff(mixed_potential, e0 * np.eye(2), b)
        np.testing.assert_allclose(out, evaluate(mixed_potential, e0) @ b, atol=1e-12)

    def test_constant_potential_ignores_heff(self, rng):
        w = rng.normal(size=(3, 3))
        pot = EnergyDependentPotential((ConstantTerm(w),))
        heff = rng.normal(size=(2, 2))
        b = rng.normal(size=(3, 2))
        np.testing.assert_allclose(apply_function_of_heff(pot, heff, b), w @ b,
                                   atol=1e-10)

    def test_diagonal_heff_is_columnwise_evaluation(self, mixed_potential, rng):
        b = rng.normal(size=(3, 2))
        heff = np.diag([0.2, 0.5])
        out = apply_function_of_heff(mixed_potential, heff, b)
        for col, energy in enumerate((0.2, 0.5)):
            np.testing.assert_allclose(out[:, col],
                                       evaluate(mixed_potential, energy) @ b[:, col],
                                       atol=1e-10)

    def test_invariant_under_eigenvector_rescaling(self, mixed_potential, rng):
        heff = np.array([[0.2, 0.03], [0.01, 0.5]])
        b = rng.normal(size=(3, 2))
        from bsbloch.numerics import eig_general

        sys = eig_general(heff)
        scales = np.array([2.7, -0.4])
        manual = np.zeros((3, 2))
        for a in range(2):
            r = sys.right_vectors[:, a] * scales[a]
            l = sys.left_vectors[a, :] / scales[a]
            manual += evaluate(mixed_potential, sys.values[a]) @ b @ np.outer(r, l)
        out = apply_function_of_heff(mixed_potential, heff, b)
        assert np.max(np.abs(out - manual)) < 1e-12 * (1 + np.max(np.abs(out)))

    def test_pole_at_eigenvalue_propagates(self):
        pot = EnergyDependentPotential((RationalTerm(np.array([[1.0]]), pole=0.5),))
        with pytest.raises(PoleHitError):
            apply_function_of_heff(pot, np.array([[0.5]]), np.array([[1.0]]))


class TestScaled:
    def test_scaled_halves_every_term(self, mixed_potential):
        half = mixed_potential.scaled(0.5)
        np.testing.assert_allclose(evaluate(half, 0.3), 0.5 * evaluate(mixed_potential, 0.3))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            EnergyDependentPotential((ConstantTerm(np.eye(2)), ConstantTerm(np.eye(3))))
