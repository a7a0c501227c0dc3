"""Effective-Hamiltonian perturbation theory and all-order solvers for
energy-dependent two-fermion interactions on quasi-degenerate model spaces."""

from .allorder import (
    BranchSolveReport,
    BsBlochState,
    Root,
    SolveOptions,
    bs_bloch_solve,
    full_hamiltonian,
    heff_bar,
    omega_bar,
    oracle_scan,
    solve_bs_state,
)
from .diffratio import SamplePoints, diff_ratio, divided_difference, taylor_limit_check
from .errors import (
    BadRangeError,
    BranchJumpError,
    BsBlochError,
    ConfigError,
    DefectiveMatrixError,
    DivergedError,
    NoRootError,
    PoleHitError,
    SingularMatrixError,
)
from .expansion import (
    EffectiveHamiltonian,
    ExpansionLedger,
    LedgerEntry,
    WaveOperator,
    bloch_iterate,
    expand,
    heff1,
    heff2,
    heff3,
    omega1,
    omega2,
    omega3,
)
from .model import (
    ModelSpace,
    Orbital,
    Spectrum,
    model_space,
    reduced_resolvent,
    resolvent,
    spectrum_from_diagonal,
    tensor_h0,
)
from .numerics import EigenSystem, QuadratureGrid, eig_general, gauss_legendre, solve_linear
from .potential import (
    ConstantTerm,
    EnergyDependentPotential,
    PhotonKernel,
    PhotonTerm,
    Profile,
    RationalTerm,
    apply_function_of_heff,
    derivative,
    evaluate,
    zero_potential,
)

__version__ = "0.1.0"
