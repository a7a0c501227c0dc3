"""Zeroth-order systems: single-particle orbitals, two-particle spectra,
model-space splits, and resolvents.

The basis is always the eigenbasis of H0, so H0 is carried as its diagonal.
Particle/hole character is the sign attached to each orbital; by default it
follows the sign of the orbital energy.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import PoleHitError

#: energies closer to a zeroth-order pole than this raise PoleHitError
POLE_TOL = 1e-12

#: maximum two-particle basis size accepted by tensor_h0
MAX_BASIS = 4096


@dataclass(frozen=True)
class Orbital:
    """Single-particle level: index, energy, and particle(+1)/hole(-1) sign.

    The sign defaults to sgn(energy) (zero counts as particle). Passing an
    explicit sign that disagrees with the energy records an override.
    """

    index: int
    energy: float
    sign: int = None  # type: ignore[assignment]
    sign_overridden: bool = field(default=False, compare=False)

    def __post_init__(self):
        natural = 1 if self.energy >= 0 else -1
        if self.sign is None:
            object.__setattr__(self, "sign", natural)
        else:
            if self.sign not in (1, -1):
                raise ValueError(f"orbital sign must be +1 or -1, got {self.sign}")
            if self.sign != natural:
                object.__setattr__(self, "sign_overridden", True)


@dataclass(frozen=True)
class Spectrum:
    """Zeroth-order spectrum: basis labels and the diagonal of H0.

    ``orbital_pairs`` maps every basis state to its (first, second) orbital
    pair when the basis is a two-particle tensor product; it is required by
    photon kernels and optional otherwise.
    """

    basis_labels: tuple
    h0_diagonal: np.ndarray
    orbital_pairs: tuple = None  # type: ignore[assignment]

    def __post_init__(self):
        h0 = np.asarray(self.h0_diagonal, dtype=float)
        if h0.ndim != 1 or h0.size < 1:
            raise ValueError("h0_diagonal must be a nonempty vector")
        h0.setflags(write=False)
        object.__setattr__(self, "h0_diagonal", h0)
        object.__setattr__(self, "basis_labels", tuple(self.basis_labels))
        if len(self.basis_labels) != h0.size:
            raise ValueError("basis_labels and h0_diagonal sizes disagree")
        if self.orbital_pairs is not None:
            pairs = tuple(self.orbital_pairs)
            if len(pairs) != h0.size:
                raise ValueError("orbital_pairs and h0_diagonal sizes disagree")
            for i, (a, b) in enumerate(pairs):
                if abs(a.energy + b.energy - h0[i]) > 1e-14:
                    raise ValueError(
                        f"basis state {i}: pair energies {a.energy}+{b.energy} "
                        f"do not add up to h0 diagonal {h0[i]}"
                    )
            object.__setattr__(self, "orbital_pairs", pairs)

    @property
    def size(self):
        return self.h0_diagonal.size


def spectrum_from_diagonal(h0_values, labels=None):
    """Spectrum with an explicitly given H0 diagonal and no pair structure."""
    h0 = np.asarray(h0_values, dtype=float)
    if labels is None:
        labels = tuple(str(i) for i in range(h0.size))
    return Spectrum(basis_labels=labels, h0_diagonal=h0)


@dataclass(frozen=True)
class ModelSpace:
    """Ordered subset of basis indices spanning the model space P.

    ``degenerate_energy`` is set only when all model-state energies agree
    within 1e-12 (exact degeneracy); quasi-degenerate spaces carry per-state
    energies instead.
    """

    p_indices: tuple
    degenerate_energy: float = None  # type: ignore[assignment]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.p_indices)
        if len(set(idx)) != len(idx) or len(idx) == 0:
            raise ValueError(f"model-space indices must be distinct and nonempty: {idx}")
        object.__setattr__(self, "p_indices", idx)

    @property
    def dim(self):
        return len(self.p_indices)

    def q_indices(self, n):
        """Complement of P within a basis of size n."""
        inside = set(self.p_indices)
        return tuple(i for i in range(n) if i not in inside)

    def energies(self, spectrum):
        """Zeroth-order energy of each model state, in P order."""
        return spectrum.h0_diagonal[list(self.p_indices)]


def model_space(spectrum, indices):
    """Build a ModelSpace on ``spectrum``, detecting exact degeneracy."""
    idx = tuple(int(i) for i in indices)
    n = spectrum.size
    for i in idx:
        if not 0 <= i < n:
            raise ValueError(f"model index {i} outside basis [0, {n})")
    energies = spectrum.h0_diagonal[list(idx)]
    e0 = None
    if energies.size > 0 and np.max(energies) - np.min(energies) <= 1e-12:
        e0 = float(energies[0])
    return ModelSpace(p_indices=idx, degenerate_energy=e0)


def tensor_h0(h1, h2):
    """Two-particle spectrum as the tensor sum of two orbital lists.

    Basis state (r, s) has energy eps_r + eps_s; ordering is row-major in
    (r, s). Orbital pairs are recorded for use by photon kernels.
    """
    h1 = list(h1)
    h2 = list(h2)
    if not h1 or not h2:
        raise ValueError("both orbital lists must be nonempty")
    n = len(h1) * len(h2)
    if n > MAX_BASIS:
        raise ValueError(f"tensor basis size {n} exceeds limit {MAX_BASIS}")
    labels = []
    diag = np.empty(n)
    pairs = []
    k = 0
    for a in h1:
        for b in h2:
            labels.append(f"{a.index},{b.index}")
            diag[k] = a.energy + b.energy
            pairs.append((a, b))
            k += 1
    return Spectrum(basis_labels=tuple(labels), h0_diagonal=diag, orbital_pairs=tuple(pairs))


def resolvent(spectrum, energy):
    """Diagonal resolvent 1/(E - H0) on the full basis.

    Raises PoleHitError when E sits within 1e-12 of a zeroth-order energy.
    """
    gaps = energy - spectrum.h0_diagonal
    hit = np.abs(gaps) <= POLE_TOL
    if np.any(hit):
        i = int(np.argmax(hit))
        raise PoleHitError(
            f"resolvent pole: E={energy} within {POLE_TOL:.0e} of basis state "
            f"{i} (h0={spectrum.h0_diagonal[i]})",
            energy=energy,
            detail={"state": i},
        )
    return np.diag(1.0 / gaps)


def reduced_resolvent(spectrum, pspace, energy):
    """Q-projected resolvent: zero on model states, 1/(E - eps_q) outside.

    Model-space poles are projected out and never evaluated, so the result
    is independent of the H0 values inside P. Only Q-space poles raise.
    """
    n = spectrum.size
    diag = np.zeros(n)
    for q in pspace.q_indices(n):
        gap = energy - spectrum.h0_diagonal[q]
        if abs(gap) <= POLE_TOL:
            raise PoleHitError(
                f"reduced resolvent pole: E={energy} within {POLE_TOL:.0e} of "
                f"Q-space state {q} (h0={spectrum.h0_diagonal[q]})",
                energy=energy,
                detail={"state": q},
            )
        diag[q] = 1.0 / gap
    return np.diag(diag)


def reduced_resolvent_diag(spectrum, pspace, energy, positive_only=False):
    """Diagonal of the reduced resolvent as a vector (cheaper than the matrix).

    With ``positive_only`` set, intermediate states containing a hole orbital
    are projected out of Q as well (both-particle projection); this requires
    orbital pair data.
    """
    n = spectrum.size
    diag = np.zeros(n)
    keep = None
    if positive_only:
        if spectrum.orbital_pairs is None:
            raise ValueError("positive_only projection needs orbital_pairs")
        keep = [a.sign > 0 and b.sign > 0 for a, b in spectrum.orbital_pairs]
    for q in pspace.q_indices(n):
        if keep is not None and not keep[q]:
            continue
        gap = energy - spectrum.h0_diagonal[q]
        if abs(gap) <= POLE_TOL:
            raise PoleHitError(
                f"reduced resolvent pole: E={energy} within {POLE_TOL:.0e} of "
                f"Q-space state {q} (h0={spectrum.h0_diagonal[q]})",
                energy=energy,
                detail={"state": q},
            )
        diag[q] = 1.0 / gap
    return diag
