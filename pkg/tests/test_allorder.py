import numpy as np
import pytest

from bsbloch.allorder import (
    SolveOptions,
    bs_bloch_solve,
    full_hamiltonian,
    heff_bar,
    omega_bar,
    oracle_scan,
    solve_bs_state,
)
from bsbloch.errors import DivergedError, NoRootError
from bsbloch.model import model_space, reduced_resolvent_diag, spectrum_from_diagonal
from bsbloch.numerics import eig_general
from bsbloch.potential import ConstantTerm, EnergyDependentPotential, RationalTerm, zero_potential
from bsbloch.verify import TOY_A_ENERGY, TOY_B_ENERGY


class TestOmegaBar:
    def test_zero_potential_is_injection(self, toy_a):
        s, p, _ = toy_a
        wop = omega_bar(s, p, zero_potential(4), 0.3)
        np.testing.assert_array_equal(wop.block[:, 0], [1.0, 0.0, 0.0, 0.0])

    def test_toy_a_amplitude_equals_eigenvector_ratio(self, toy_a):
        s, p, pot = toy_a
        wop = omega_bar(s, p, pot, TOY_A_ENERGY)
        assert wop.block[1, 0] == pytest.approx(0.1 / (TOY_A_ENERGY - 1.0), rel=1e-12)
        assert wop.block[1, 0] == pytest.approx(TOY_A_ENERGY / 0.1, rel=1e-9)

    def test_truncated_series_remainder_is_fourth_order(self, rng):
        s = spectrum_from_diagonal([0.0, 1.0, 1.6, 2.2])
        p = model_space(s, [0])
        w = rng.normal(size=(4, 4)) * 0.04
        w = 0.5 * (w + w.T)
        pot = EnergyDependentPotential((ConstantTerm(w),))
        energy = 0.05
        gqv = reduced_resolvent_diag(s, p, energy)[:, None] * pot.evaluate(energy)
        inj = np.zeros((4, 1))
        inj[0, 0] = 1.0
        series = inj + gqv @ inj + gqv @ (gqv @ inj) + gqv @ (gqv @ (gqv @ inj))
        exact = omega_bar(s, p, pot, energy).block
        norm = np.linalg.norm(gqv, 2)
        assert norm < 0.5
        remainder = np.linalg.norm(exact - series)
        assert remainder <= 2.0 * norm ** 4 / (1.0 - norm)

    def test_heff_bar_full_model_space(self, rng):
        s = spectrum_from_diagonal([0.0, 0.4])
        p = model_space(s, [0, 1])
        w = rng.normal(size=(2, 2))
        pot = EnergyDependentPotential((ConstantTerm(w),))
        np.testing.assert_allclose(heff_bar(s, p, pot, 0.1), w, atol=1e-14)

    def test_heff_bar_toys(self, toy_a, toy_b):
        s, p, pot = toy_b
        assert heff_bar(s, p, pot, 0.0)[0, 0] == pytest.approx(0.25, abs=1e-15)
        s, p, pot = toy_a
        assert heff_bar(s, p, pot, 0.0)[0, 0] == pytest.approx(-0.01, abs=1e-15)

    def test_resummation_resonance_raises_singular(self):
        from bsbloch.errors import SingularMatrixError

        s = spectrum_from_diagonal([0.0, 1.0])
        p = model_space(s, [0])
        w = np.array([[0.0, 0.1], [0.1, 0.3]])
        pot = EnergyDependentPotential((ConstantTerm(w),))
        # det(1 - Gq V) vanishes at E = 1 + V_qq
        with pytest.raises(SingularMatrixError):
            omega_bar(s, p, pot, 1.3)


class TestSolveBsState:
    def test_toy_b_fixed_point(self, toy_b):
        s, p, pot = toy_b
        report = solve_bs_state(s, p, pot, 0, (-0.5, 0.5))
        assert report.energy == pytest.approx(TOY_B_ENERGY, abs=1e-12)
        assert report.residual <= 1e-12

    def test_toy_a_fixed_point(self, toy_a):
        s, p, pot = toy_a
        report = solve_bs_state(s, p, pot, 0, (-0.5, 0.5))
        assert report.energy == pytest.approx(TOY_A_ENERGY, abs=1e-12)

    def test_zero_potential_returns_unperturbed_energy(self, toy_a):
        s, p, _ = toy_a
        report = solve_bs_state(s, p, zero_potential(4), 0, (-0.5, 0.5))
        assert report.energy == pytest.approx(0.0, abs=1e-13)

    def test_wave_column_satisfies_fixed_point_equation(self, toy_a):
        s, p, pot = toy_a
        report = solve_bs_state(s, p, pot, 0, (-0.5, 0.5))
        v = pot.evaluate(report.energy)
        residual = ((report.energy - s.h0_diagonal) * report.wave_column
                    - v @ report.wave_column)
        assert np.linalg.norm(residual) <= 1e-9 * (1 + np.linalg.norm(v))

    def test_intermediate_normalization_of_wave(self, toy_a):
        s, p, pot = toy_a
        report = solve_bs_state(s, p, pot, 0, (-0.5, 0.5))
        np.testing.assert_allclose(report.wave_column[list(p.p_indices)],
                                   report.model_vector, atol=1e-13)

    def test_no_root_in_bracket(self, toy_a):
        s, p, pot = toy_a
        with pytest.raises(NoRootError):
            solve_bs_state(s, p, pot, 0, (0.2, 0.4))

    def test_complex_branch_reported_as_lost(self):
        from bsbloch.errors import BranchJumpError

        s = spectrum_from_diagonal([0.0, 0.1])
        p = model_space(s, [0])
        # antisymmetric coupling drives the pair complex for any E
        w = np.array([[0.0, 0.2], [-0.2, 0.0]])
        pot = EnergyDependentPotential((ConstantTerm(w),))
        with pytest.raises(BranchJumpError):
            solve_bs_state(s, p, pot, 0, (-0.5, 0.5))


class TestOracleScan:
    def test_toy_b_single_root(self, toy_b):
        s, p, pot = toy_b
        roots = oracle_scan(s, p, pot, (-0.5, 0.5), 101)
        assert len(roots) == 1
        assert roots[0].energy == pytest.approx(TOY_B_ENERGY, abs=1e-11)

    def test_toy_a_root(self, toy_a):
        s, p, pot = toy_a
        roots = oracle_scan(s, p, pot, (-0.5, 0.5), 101)
        assert len(roots) == 1
        assert roots[0].energy == pytest.approx(TOY_A_ENERGY, abs=1e-11)
        assert roots[0].branch == 0

    def test_zero_potential_returns_spectrum(self):
        s = spectrum_from_diagonal([0.1, 0.4, 0.9, 3.0])
        p = model_space(s, [0])
        roots = oracle_scan(s, p, zero_potential(4), (0.0, 1.0), 51)
        np.testing.assert_allclose(sorted(r.energy for r in roots),
                                   [0.1, 0.4, 0.9], atol=1e-11)


class TestBsBlochSolve:
    def test_zero_potential_converges_immediately(self, toy_c):
        s, p, _ = toy_c
        state = bs_bloch_solve(s, p, zero_potential(4))
        assert state.iterations == 1
        np.testing.assert_array_equal(state.heff.interaction, 0.0)
        np.testing.assert_allclose(sorted(state.energies), [0.0, 0.01], atol=1e-15)
        np.testing.assert_array_equal(state.omega.block[list(p.p_indices), :],
                                      np.eye(2))

    def test_scalar_model_space_agrees_with_branch_solve(self, toy_a):
        s, p, pot = toy_a
        state = bs_bloch_solve(s, p, pot)
        assert float(np.real(state.energies[0])) == pytest.approx(TOY_A_ENERGY,
                                                                  abs=1e-12)

    def test_toy_c_eigenvalues_match_oracle(self, toy_c):
        s, p, pot = toy_c
        state = bs_bloch_solve(s, p, pot)
        roots = oracle_scan(s, p, pot, (-0.2, 0.25), 201)
        for energy in np.real(state.energies):
            assert min(abs(r.energy - energy) for r in roots) <= 1e-9

    def test_trace_records_monotone_tail(self, toy_a):
        s, p, pot = toy_a
        state = bs_bloch_solve(s, p, pot)
        assert state.max_normalization_drift <= 1e-12
        assert len(state.trace) == state.iterations
        assert state.trace[-1][0] <= 1e-13 and state.trace[-1][1] <= 1e-13

    def test_max_sweeps_exhaustion_raises(self, toy_a):
        s, p, pot = toy_a
        with pytest.raises(DivergedError):
            bs_bloch_solve(s, p, pot, SolveOptions(max_sweeps=3))

    def test_gap_floor_guard(self):
        s = spectrum_from_diagonal([0.0, 1e-9, 1.0])
        p = model_space(s, [0])
        pot = EnergyDependentPotential((ConstantTerm(0.1 * np.eye(3)),))
        with pytest.raises(DivergedError):
            bs_bloch_solve(s, p, pot)


class TestCrossChecks:
    def test_resummed_wave_matches_exact_eigenvector(self, toy_b):
        s, p, pot = toy_b
        report = solve_bs_state(s, p, pot, 0, (-0.5, 0.5))
        eigsys = eig_general(full_hamiltonian(s, pot, report.energy))
        k = int(np.argmin(np.abs(eigsys.values - report.energy)))
        exact = eigsys.right_vectors[:, k]
        scale = exact[0]
        np.testing.assert_allclose(exact / scale, report.wave_column, atol=1e-9)

    def test_solvers_agree_on_random_instances(self):
        # every shared branch of 50 weak-coupling instances within 1e-9
        from bsbloch.verify import ensemble

        for inst in ensemble(20240, 50):
            state = bs_bloch_solve(inst.spectrum, inst.pspace, inst.potential)
            energies = np.sort(np.real(state.energies))
            width = 0.45 * min(np.diff(np.concatenate([[inst.scan_range[0]],
                                                       energies,
                                                       [inst.scan_range[1]]])))
            for energy in energies:
                tracked = _nearest_branch(inst, energy)
                report = solve_bs_state(inst.spectrum, inst.pspace, inst.potential,
                                        tracked, (energy - width, energy + width))
                assert report.energy == pytest.approx(energy, abs=1e-9)

    def test_scale_covariance(self, toy_b):
        s, p, pot = toy_b
        c = 3.0
        scaled_spectrum = spectrum_from_diagonal(c * s.h0_diagonal)
        scaled_p = model_space(scaled_spectrum, [0])
        # V(E) = w/(E - a): under E -> cE this needs w -> c^2 w, a -> c a
        term = pot.terms[0]
        scaled_pot = EnergyDependentPotential((
            RationalTerm(term.w * c ** 2, pole=c * term.pole, power=1),
        ))
        base = solve_bs_state(s, p, pot, 0, (-0.5, 0.5)).energy
        scaled = solve_bs_state(scaled_spectrum, scaled_p, scaled_pot, 0,
                                (-0.5 * c, 0.5 * c)).energy
        assert scaled == pytest.approx(c * base, rel=1e-10)


def _nearest_branch(inst, energy):
    ham = full_hamiltonian(inst.spectrum, inst.potential, inst.scan_range[0])
    values = np.sort(np.real(eig_general(ham).values))
    return int(np.argmin(np.abs(values - energy)))
