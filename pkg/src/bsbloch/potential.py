"""Energy-dependent interaction operators V(E).

A potential is a sum of terms: constant matrices, rational-in-E matrices
W/(E-a)^p, and single-photon kernels whose matrix elements carry two
retarded denominators per quadrature node.  All E-derivatives are analytic
(never finite differences), so the Taylor machinery downstream stays at
machine precision.

``apply_function_of_heff`` realizes the function-of-a-matrix action
V(H_eff) @ B through the eigenbasis of H_eff: on each model eigenvector the
potential is evaluated at the corresponding eigenvalue.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import PoleHitError
from .numerics import QuadratureGrid, eig_general

#: admissibility margin for rational poles
POLE_TOL = 1e-12

#: admissibility margin for undamped photon denominators
PHOTON_POLE_TOL = 1e-10


@dataclass(frozen=True)
class Profile:
    """Scalar photon profile g(k): 'constant', 'gaussian' or 'lorentzian'."""

    name: str
    scale: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.name not in ("constant", "gaussian", "lorentzian"):
            raise ValueError(f"unknown profile {self.name!r}")
        if self.name != "constant" and self.width <= 0:
            raise ValueError(f"profile width must be positive, got {self.width}")

    def __call__(self, k):
        if self.name == "constant":
            return self.scale * np.ones_like(np.asarray(k, dtype=float))
        if self.name == "gaussian":
            z = (np.asarray(k, dtype=float) - self.center) / self.width
            return self.scale * np.exp(-0.5 * z * z)
        z = (np.asarray(k, dtype=float) - self.center) / self.width
        return self.scale / (1.0 + z * z)


def _as_square(w, what):
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"{what} must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{what} has non-finite entries")
    w = w.copy()
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class ConstantTerm:
    """Energy-independent coupling matrix."""

    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _as_square(self.w, "constant coupling"))

    @property
    def dim(self):
        return self.w.shape[0]

    def evaluate(self, energy):
        return self.w.copy()

    def derivative(self, energy, order):
        return np.zeros_like(self.w)


@dataclass(frozen=True)
class RationalTerm:
    """W / (E - pole)^power with an integer power >= 1."""

    w: np.ndarray
    pole: float
    power: int = 1

    def __post_init__(self):
        object.__setattr__(self, "w", _as_square(self.w, "rational coupling"))
        if self.power < 1:
            raise ValueError(f"rational power must be >= 1, got {self.power}")

    @property
    def dim(self):
        return self.w.shape[0]

    def _check(self, energy):
        if abs(energy - self.pole) <= POLE_TOL:
            raise PoleHitError(
                f"rational term pole: E={energy} within {POLE_TOL:.0e} of {self.pole}",
                energy=energy,
                detail={"term": "rational", "pole": self.pole},
            )

    def evaluate(self, energy):
        self._check(energy)
        return self.w / (energy - self.pole) ** self.power

    def derivative(self, energy, order):
        self._check(energy)
        # d^n/dE^n (E-a)^(-p) = (-1)^n p(p+1)...(p+n-1) (E-a)^(-p-n)
        rising = math.prod(range(self.power, self.power + order))
        sign = -1 if order % 2 else 1
        return sign * rising * self.w / (energy - self.pole) ** (self.power + order)


@dataclass(frozen=True)
class PhotonKernel:
    """Retarded single-photon kernel data.

    Matrix element (i, j) between two-particle states i=(r,s) and j=(t,u):

        sum_k  weight_k g(k_k) W[i,j] * [ 1/(E - eps_r - eps_u - (k-i*gamma)*s_r)
                                        + 1/(E - eps_s - eps_t - (k-i*gamma)*s_s) ]

    where (eps_r, eps_s) are the bra-state orbital energies, (eps_t, eps_u)
    the ket-state ones, and s_r, s_s the bra-orbital particle/hole signs.
    """

    grid: QuadratureGrid
    profile: Profile
    coupling: np.ndarray
    gamma: float
    eps_first: np.ndarray   # first-orbital energy per basis state
    eps_second: np.ndarray  # second-orbital energy per basis state
    sign_first: np.ndarray
    sign_second: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coupling", _as_square(self.coupling, "photon coupling"))
        if self.gamma < 0:
            raise ValueError(f"photon damping must be >= 0, got {self.gamma}")
        n = self.coupling.shape[0]
        for name in ("eps_first", "eps_second", "sign_first", "sign_second"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_spectrum(cls, spectrum, grid, coupling, profile=None, gamma=0.0):
        """Extract per-state orbital energies and signs from a tensor spectrum."""
        if spectrum.orbital_pairs is None:
            raise ValueError("photon kernel needs a spectrum with orbital_pairs")
        pairs = spectrum.orbital_pairs
        return cls(
            grid=grid,
            profile=profile if profile is not None else Profile("constant"),
            coupling=coupling,
            gamma=gamma,
            eps_first=np.array([a.energy for a, _ in pairs]),
            eps_second=np.array([b.energy for _, b in pairs]),
            sign_first=np.array([a.sign for a, _ in pairs], dtype=float),
            sign_second=np.array([b.sign for _, b in pairs], dtype=float),
        )


@dataclass(frozen=True)
class PhotonTerm:
    """Potential term wrapping a :class:`PhotonKernel`."""

    kernel: PhotonKernel

    @property
    def dim(self):
        return self.kernel.coupling.shape[0]

    def _accumulate(self, energy, order):
        k = self.kernel
        nodes = k.grid.nodes
        retarded = nodes - 1j * k.gamma if k.gamma > 0 else nodes
        # stacked over nodes: bra-first + ket-second with the bra-first sign,
        # and bra-second + ket-first with the bra-second sign
        d1 = (energy - k.eps_first[:, None] - k.eps_second[None, :]
              - retarded[:, None, None] * k.sign_first[None, :, None])
        d2 = (energy - k.eps_second[:, None] - k.eps_first[None, :]
              - retarded[:, None, None] * k.sign_second[None, :, None])
        if k.gamma == 0:
            mags = np.minimum(np.abs(d1), np.abs(d2))
            flat = int(np.argmin(mags))
            if mags.flat[flat] < PHOTON_POLE_TOL:
                node = nodes[flat // (mags.shape[1] * mags.shape[2])]
                raise PoleHitError(
                    f"photon term pole: E={energy} leaves a denominator at "
                    f"{mags.flat[flat]:.3e} (< {PHOTON_POLE_TOL:.0e}) on node k={node}",
                    energy=energy,
                    detail={"term": "photon", "node": float(node)},
                )
        coeff = k.grid.weights * k.profile(nodes)
        if order:
            coeff = coeff * (math.factorial(order) * (-1 if order % 2 else 1))
            summed = d1 ** -(order + 1) + d2 ** -(order + 1)
        else:
            summed = 1.0 / d1 + 1.0 / d2
        return np.tensordot(coeff, summed, axes=1) * k.coupling

    def evaluate(self, energy):
        return self._accumulate(energy, 0)

    def derivative(self, energy, order):
        return self._accumulate(energy, order)


@dataclass(frozen=True)
class EnergyDependentPotential:
    """Sum of interaction terms sharing one basis size."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        dims = {t.dim for t in terms}
        if len(dims) > 1:
            raise ValueError(f"potential terms disagree on basis size: {sorted(dims)}")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self):
        return self.terms[0].dim if self.terms else 0

    @property
    def energy_independent(self):
        return all(isinstance(t, ConstantTerm) for t in self.terms)

    def evaluate(self, energy):
        return evaluate(self, energy)

    def derivative(self, energy, order=1):
        return derivative(self, energy, order)

    def scaled(self, factor):
        """Same potential with every coupling matrix multiplied by ``factor``."""
        out = []
        for t in self.terms:
            if isinstance(t, ConstantTerm):
                out.append(ConstantTerm(t.w * factor))
            elif isinstance(t, RationalTerm):
                out.append(RationalTerm(t.w * factor, t.pole, t.power))
            elif isinstance(t, PhotonTerm):
                k = t.kernel
                out.append(PhotonTerm(PhotonKernel(
                    grid=k.grid, profile=k.profile, coupling=k.coupling * factor,
                    gamma=k.gamma, eps_first=k.eps_first, eps_second=k.eps_second,
                    sign_first=k.sign_first, sign_second=k.sign_second)))
            else:
                raise TypeError(f"cannot scale term of type {type(t).__name__}")
        return EnergyDependentPotential(tuple(out))


def zero_potential(n):
    """Potential that evaluates to the n x n zero matrix at every energy."""
    return EnergyDependentPotential((ConstantTerm(np.zeros((n, n))),))


def evaluate(potential, energy):
    """V(E) as the sum of all term evaluations."""
    if not potential.terms:
        raise ValueError("potential has no terms")
    out = potential.terms[0].evaluate(energy)
    for t in potential.terms[1:]:
        out = out + t.evaluate(energy)
    return out


def derivative(potential, energy, order=1):
    """Analytic d^n V / dE^n, n >= 1."""
    if order < 1:
        raise ValueError(f"derivative order must be >= 1, got {order}")
    if not potential.terms:
        raise ValueError("potential has no terms")
    out = potential.terms[0].derivative(energy, order)
    for t in potential.terms[1:]:
        out = out + t.derivative(energy, order)
    return out


def apply_function_of_heff(potential, heff, block, n_deriv=0):
    """Evaluate V(H_eff) @ B (or its n-th E-derivative) columnwise.

    H_eff (d x d) must be diagonalizable; B is an N x d block over the model
    space.  With eigenpairs {E_a, r_a, l_a} of H_eff the result is

        sum_a V^(n)(E_a) @ B @ r_a l_a

    which pins V(H_eff) B psi = V(E_a) B psi on every eigenvector psi and
    extends by linearity.  Biorthonormal left/right pairs make the result
    independent of eigenvector scaling.
    """
    heff = np.asarray(heff)
    block = np.asarray(block)
    eigsys = eig_general(heff)
    out = None
    for a in range(eigsys.dim):
        e_a = eigsys.values[a]
        if e_a.imag == 0:
            e_a = e_a.real
        v = (potential.evaluate(e_a) if n_deriv == 0
             else potential.derivative(e_a, n_deriv))
        projector = np.outer(eigsys.right_vectors[:, a], eigsys.left_vectors[a, :])
        piece = v @ (block @ projector)
        out = piece if out is None else out + piece
    return out
