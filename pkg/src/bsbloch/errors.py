"""Exception hierarchy shared across the solver library."""


class BsBlochError(Exception):
    """Base class for all library errors."""


class DefectiveMatrixError(BsBlochError):
    """Matrix is not diagonalizable within tolerance."""


class SingularMatrixError(BsBlochError):
    """Linear system is singular or too ill-conditioned to trust."""


class BadRangeError(BsBlochError):
    """Invalid interval for a quadrature grid."""


class PoleHitError(BsBlochError):
    """An energy denominator is (numerically) singular.

    Carries enough context to name the offending operation and, for
    photon kernels, the quadrature node that hit the pole.
    """

    def __init__(self, message, energy=None, detail=None):
        super().__init__(message)
        self.energy = energy
        self.detail = detail


class NoRootError(BsBlochError):
    """Bracketing interval contains no fixed point of the tracked branch."""


class BranchJumpError(BsBlochError):
    """Eigenvector-overlap continuation lost the branch (overlap < 0.5)."""


class DivergedError(BsBlochError):
    """Fixed-point iteration failed to converge."""


class ConfigError(BsBlochError):
    """Scenario configuration failed validation; message names the field."""
