import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bsbloch.errors import BadRangeError, DefectiveMatrixError, SingularMatrixError
from bsbloch.numerics import eig_general, gauss_legendre, solve_linear

matrix_entries = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


class TestEigGeneral:
    def test_identity(self):
        sys = eig_general(np.eye(2))
        np.testing.assert_allclose(sys.values, [1.0, 1.0])
        np.testing.assert_allclose(sys.right_vectors, np.eye(2), atol=1e-14)

    def test_diagonal_sorted_ascending(self):
        sys = eig_general(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(sys.values, [1.0, 3.0])

    def test_symmetric_2x2_closed_form(self):
        m = np.array([[0.0, 0.1], [0.1, 1.0]])
        sys = eig_general(m)
        expected = [(1 - np.sqrt(1.04)) / 2, (1 + np.sqrt(1.04)) / 2]
        np.testing.assert_allclose(sys.values, expected, rtol=1e-12)

    def test_defective_raises(self):
        with pytest.raises(DefectiveMatrixError):
            eig_general(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_complex_pair_from_real_matrix(self):
        sys = eig_general(np.array([[0.0, -1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(sorted(sys.values.imag), [-1.0, 1.0], atol=1e-12)

    def test_real_matrix_real_spectrum_stays_real(self):
        sys = eig_general(np.array([[0.0, 0.1], [0.1, 1.0]]))
        assert not np.iscomplexobj(sys.values)
        assert not np.iscomplexobj(sys.right_vectors)

    @settings(max_examples=40, deadline=None)
    @given(dim=st.integers(2, 8), seed=st.integers(0, 2**31))
    def test_biorthonormality_and_reconstruction(self, dim, seed):
        m = np.random.default_rng(seed).normal(size=(dim, dim))
        try:
            sys = eig_general(m)
        except DefectiveMatrixError:
            return
        np.testing.assert_allclose(sys.left_vectors @ sys.right_vectors,
                                   np.eye(dim), atol=1e-10)
        for k in range(dim):
            np.testing.assert_allclose(m @ sys.right_vectors[:, k],
                                       sys.values[k] * sys.right_vectors[:, k],
                                       atol=1e-10 * max(1.0, np.abs(sys.values[k])))
        np.testing.assert_allclose(sys.reconstruct(), m, atol=1e-8)


class TestSolveLinear:
    def test_identity(self, rng):
        b = rng.normal(size=(4, 2))
        np.testing.assert_allclose(solve_linear(np.eye(4), b), b)

    def test_diagonal(self):
        x = solve_linear(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
        np.testing.assert_allclose(x, [1.0, 1.0])

    def test_back_substitution(self):
        x = solve_linear(np.array([[1.0, 0.5], [0.0, 1.0]]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(x, [0.5, 1.0])

    def test_singular_raises(self):
        with pytest.raises(SingularMatrixError):
            solve_linear(np.ones((2, 2)), np.ones(2))

    @settings(max_examples=40, deadline=None)
    @given(x=arrays(np.float64, (4,), elements=matrix_entries),
           seed=st.integers(0, 2**31))
    def test_roundtrip(self, x, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(4, 4)) + 4.0 * np.eye(4)
        if np.linalg.cond(a) > 1e6:
            return
        np.testing.assert_allclose(solve_linear(a, a @ x), x,
                                   atol=1e-9 * max(1.0, np.max(np.abs(x))))


class TestGaussLegendre:
    def test_single_node_is_midpoint(self):
        grid = gauss_legendre(1, 0.0, 2.0)
        np.testing.assert_allclose(grid.nodes, [1.0])
        np.testing.assert_allclose(grid.weights, [2.0])

    def test_two_node_reference_rule(self):
        grid = gauss_legendre(2, -1.0, 1.0)
        np.testing.assert_allclose(grid.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)])
        np.testing.assert_allclose(grid.weights, [1.0, 1.0])

    def test_polynomial_exactness(self):
        grid = gauss_legendre(2, 0.0, 1.0)
        assert grid.integrate(lambda x: x ** 2) == pytest.approx(1 / 3, abs=1e-15)

    def test_exponential_integral(self):
        grid = gauss_legendre(20, 0.0, 10.0)
        assert grid.integrate(np.exp(-grid.nodes)) == pytest.approx(
            1 - np.exp(-10), abs=1e-10)

    def test_bad_range(self):
        with pytest.raises(BadRangeError):
            gauss_legendre(3, 1.0, 1.0)
        with pytest.raises(BadRangeError):
            gauss_legendre(0, 0.0, 1.0)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(1, 30),
           lo=st.floats(-3, 3, allow_nan=False),
           width=st.floats(0.1, 5, allow_nan=False))
    def test_grid_invariants(self, n, lo, width):
        grid = gauss_legendre(n, lo, lo + width)
        assert np.all(np.diff(grid.nodes) > 0)
        assert np.all(grid.weights > 0)
        assert np.sum(grid.weights) == pytest.approx(width, rel=1e-12)
