"""Dense matrix primitives: general eigendecomposition with biorthogonal
left/right eigenvectors, condition-checked linear solves, and Gauss-Legendre
quadrature grids.

Matrices are plain numpy arrays (real or complex per scenario). All
operations are pure; returned arrays are freshly allocated.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BadRangeError, DefectiveMatrixError, SingularMatrixError

#: below this left/right eigenvector overlap the matrix counts as defective
DEFECT_OVERLAP_TOL = 1e-8

#: condition-number ceiling for solve_linear
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class EigenSystem:
    """Full eigendecomposition M = right @ diag(values) @ left.

    ``right_vectors`` holds right eigenvectors as columns, ``left_vectors``
    holds left eigenvectors as rows, normalized so that
    ``left_vectors @ right_vectors == I``. Eigenvalues are sorted by
    ascending real part, ties broken by ascending imaginary part.
    """

    values: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray

    @property
    def dim(self):
        return len(self.values)

    def reconstruct(self):
        """Return right @ diag(values) @ left."""
        return (self.right_vectors * self.values) @ self.left_vectors


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Legendre nodes and weights on a finite interval."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    def integrate(self, f):
        """Apply the rule to a callable or to precomputed node values."""
        vals = f(self.nodes) if callable(f) else np.asarray(f)
        return np.sum(self.weights * vals)


def _sort_order(values):
    # ascending real part, ties by ascending imaginary part
    return np.lexsort((values.imag, values.real))


def eig_general(matrix):
    """Diagonalize a general square matrix.

    Returns an :class:`EigenSystem` with biorthonormal left/right pairs.
    Real input with a fully real eigensystem comes back in real arithmetic.

    Raises
    ------
    DefectiveMatrixError
        If some left/right eigenvector overlap falls below 1e-8, i.e. the
        matrix has no complete eigenbasis within tolerance.
    """
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"eig_general needs a square matrix, got shape {m.shape}")
    w, vl, vr = scipy.linalg.eig(m, left=True, right=True)

    # |vl_k^H vr_k| with unit-norm columns is 1/cond of eigenvalue k;
    # a (numerically) defective matrix shows up as a vanishing overlap.
    overlaps = np.abs(np.sum(vl.conj() * vr, axis=0))
    overlaps /= np.linalg.norm(vl, axis=0) * np.linalg.norm(vr, axis=0)
    if np.min(overlaps) < DEFECT_OVERLAP_TOL:
        raise DefectiveMatrixError(
            f"matrix is defective within tolerance (min left/right overlap "
            f"{np.min(overlaps):.3e} < {DEFECT_OVERLAP_TOL:.0e})"
        )

    order = _sort_order(w)
    w = w[order]
    vr = vr[:, order]
    # Inverting the right-eigenvector matrix biorthonormalizes the pairs
    # even inside degenerate eigenvalue clusters.
    try:
        left = np.linalg.inv(vr)
    except np.linalg.LinAlgError as exc:
        raise DefectiveMatrixError(f"eigenvector matrix not invertible: {exc}") from exc

    if np.isrealobj(m) and np.all(w.imag == 0.0):
        w = w.real
        vr = vr.real if np.isrealobj(vr) else np.ascontiguousarray(vr.real)
        left = left.real if np.isrealobj(left) else np.ascontiguousarray(left.real)
    return EigenSystem(values=w, right_vectors=vr, left_vectors=left)


def solve_linear(a, b):
    """Solve A @ X = B for a square, well-conditioned A.

    Raises
    ------
    SingularMatrixError
        If the condition estimate of A reaches 1e12.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"solve_linear needs a square matrix, got shape {a.shape}")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond >= CONDITION_LIMIT:
        raise SingularMatrixError(
            f"linear system condition estimate {cond:.3e} exceeds {CONDITION_LIMIT:.0e}"
        )
    return np.linalg.solve(a, b)


def gauss_legendre(n, kmin, kmax):
    """Gauss-Legendre rule with ``n`` nodes mapped onto [kmin, kmax].

    Exact for polynomials up to degree 2n-1.
    """
    if n < 1:
        raise BadRangeError(f"need at least one node, got n={n}")
    if not kmax > kmin:
        raise BadRangeError(f"empty quadrature range [{kmin}, {kmax}]")
    x, w = np.polynomial.legendre.leggauss(int(n))
    half = 0.5 * (kmax - kmin)
    return QuadratureGrid(nodes=kmin + half * (x + 1.0), weights=half * w)
