"""All-order solvers for the energy-dependent eigenvalue problem
(E - H0) psi = V(E) psi and its model-space generalization.

Three routes to the same physics, kept deliberately independent so they can
cross-check each other:

* ``omega_bar``/``heff_bar``: the resummed no-intermediate-model-state
  expansion at a fixed energy parameter (one linear solve).
* ``solve_bs_state``: self-consistent single-state solve; the exact energy
  is the fixed point of one tracked eigen-branch of H0 + V(E).
* ``bs_bloch_solve``: damped fixed-point iteration of the commutator
  equation [Omega, H0] P = V(H_eff) Omega P - Omega H'_eff on a whole
  (quasi-degenerate) model space.
* ``oracle_scan``: brute-force branch tabulation plus bisection; the
  independent oracle the solvers are verified against.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import BranchJumpError, DivergedError, NoRootError
from .expansion import EffectiveHamiltonian, WaveOperator
from .model import reduced_resolvent_diag
from .numerics import eig_general, solve_linear
from .potential import apply_function_of_heff

#: eigenvector-overlap floor for branch continuation
BRANCH_OVERLAP_MIN = 0.5

#: roots closer than this (same branch) count as duplicates
ROOT_DEDUP_TOL = 1e-8


@dataclass(frozen=True)
class BranchSolveReport:
    """Converged self-consistent single-state solution."""

    branch: int
    energy: float
    iterations: int
    residual: float
    wave_column: np.ndarray
    model_vector: np.ndarray


@dataclass(frozen=True)
class Root:
    """One fixed point g_j(E) = E found by the oracle scan."""

    branch: int
    energy: float


@dataclass
class SolveOptions:
    """Knobs for the model-space fixed-point iteration."""

    tol: float = 1e-13
    max_sweeps: int = 5000
    mixing: float = 0.5
    gap_floor: float = 1e-6
    residual_tol: float = 1e-9
    adapt_mixing: bool = True
    divergence_window: int = 5


@dataclass
class BsBlochState:
    """Converged wave operator and effective Hamiltonian with diagnostics."""

    omega: WaveOperator
    heff: EffectiveHamiltonian
    energies: np.ndarray
    right_model: np.ndarray
    left_model: np.ndarray
    iterations: int
    trace: list = field(default_factory=list)
    bsa_residuals: np.ndarray = None  # type: ignore[assignment]
    max_normalization_drift: float = 0.0


def full_hamiltonian(spectrum, potential, energy):
    """H0 + V(E) on the full basis."""
    return np.diag(spectrum.h0_diagonal) + potential.evaluate(energy)


def omega_bar(spectrum, pspace, potential, energy):
    """All-order wave operator at a fixed energy parameter.

    Resums P + Gq V P + Gq V Gq V P + ... through the linear solve
    (1 - Gq(E) V(E)) X = P-injection; equals the geometric series whenever
    that series converges.
    """
    gq = reduced_resolvent_diag(spectrum, pspace, energy)
    v = potential.evaluate(energy)
    n = spectrum.size
    injection = WaveOperator.injection(n, pspace.p_indices).block
    a = np.eye(n) - gq[:, None] * v
    x = solve_linear(a, injection.astype(a.dtype))
    # the model rows solve to exactly the identity; clean off roundoff
    x[list(pspace.p_indices), :] = np.eye(pspace.dim)
    return WaveOperator(block=x, p_indices=pspace.p_indices)


def heff_bar(spectrum, pspace, potential, energy):
    """Interaction part of the effective Hamiltonian at a fixed energy:
    model block of V(E) @ omega_bar(E)."""
    ob = omega_bar(spectrum, pspace, potential, energy)
    return (potential.evaluate(energy) @ ob.block)[list(pspace.p_indices), :]


def _overlap(a, b):
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.abs(np.vdot(a, b)) / (na * nb))


class _BranchTracker:
    """Follows one eigen-branch of H0 + V(E) by eigenvector overlap."""

    def __init__(self, spectrum, potential, energy, branch):
        self.spectrum = spectrum
        self.potential = potential
        eigsys = eig_general(full_hamiltonian(spectrum, potential, energy))
        if not 0 <= branch < eigsys.dim:
            raise ValueError(f"branch {branch} outside 0..{eigsys.dim - 1}")
        self.branch = branch
        self.vector = eigsys.right_vectors[:, branch]
        self.value = eigsys.values[branch]

    def eval(self, energy):
        """Branch eigenvalue at this energy; updates the reference vector."""
        eigsys = eig_general(full_hamiltonian(self.spectrum, self.potential, energy))
        overlaps = [_overlap(self.vector, eigsys.right_vectors[:, k])
                    for k in range(eigsys.dim)]
        k = int(np.argmax(overlaps))
        if overlaps[k] < BRANCH_OVERLAP_MIN:
            raise BranchJumpError(
                f"branch continuation lost at E={energy}: best overlap "
                f"{overlaps[k]:.3f} < {BRANCH_OVERLAP_MIN}"
            )
        self.vector = eigsys.right_vectors[:, k]
        self.value = eigsys.values[k]
        return self.value


def _real(x, what):
    x = complex(x)
    if abs(x.imag) > 1e-10 * max(1.0, abs(x.real)):
        raise BranchJumpError(f"{what} turned complex: {x}")
    return x.real


def solve_bs_state(spectrum, pspace, potential, branch=0, bracket=(-1.0, 1.0),
                   tol=1e-12, max_iter=200):
    """Self-consistent solve of g(E) = E on one tracked eigen-branch.

    Bracketing bisection refined by secant steps; the bracket must contain a
    sign change of g(E) - E and stay clear of complement-space resonances.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not hi > lo:
        raise ValueError(f"bracket must be increasing, got ({lo}, {hi})")
    tracker = _BranchTracker(spectrum, potential, lo, branch)

    evals = 0

    def phi(e):
        nonlocal evals
        evals += 1
        return _real(tracker.eval(e), "branch eigenvalue") - e

    fa = phi(lo)
    fb = phi(hi)
    a, b = lo, hi
    if fa == 0.0:
        a = b = lo
        fb = fa
    elif fb == 0.0:
        a = b = hi
        fa = fb
    elif np.sign(fa) == np.sign(fb):
        raise NoRootError(
            f"no sign change of g(E)-E in bracket [{lo}, {hi}] on branch {branch} "
            f"(values {fa:.3e}, {fb:.3e})"
        )
    x_prev, f_prev = a, fa
    x_cur, f_cur = b, fb
    while evals < max_iter:
        if abs(f_cur) == 0.0 or (b - a) <= 1e-15 * max(1.0, abs(a), abs(b)):
            break
        # secant proposal, midpoint fallback
        use_mid = True
        if f_cur != f_prev:
            x_new = x_cur - f_cur * (x_cur - x_prev) / (f_cur - f_prev)
            if a < x_new < b:
                use_mid = False
        if use_mid:
            x_new = 0.5 * (a + b)
        f_new = phi(x_new)
        if f_new == 0.0:
            x_cur, f_cur = x_new, f_new
            break
        if np.sign(f_new) == np.sign(fa):
            a, fa = x_new, f_new
        else:
            b, fb = x_new, f_new
        x_prev, f_prev = x_cur, f_cur
        x_cur, f_cur = x_new, f_new
        if abs(f_cur) < 1e-3 * tol:
            break
    energy = x_cur
    residual = abs(f_cur)
    if residual > tol:
        raise NoRootError(
            f"bracket refinement stalled on branch {branch}: residual "
            f"{residual:.3e} > tol {tol:.0e} after {evals} evaluations"
        )
    # intermediate-normalized wave function of the matched branch
    vector = tracker.vector
    model_part = vector[list(pspace.p_indices)]
    norm = np.linalg.norm(model_part)
    if norm == 0:
        raise BranchJumpError(
            f"branch {branch} eigenvector has no model-space component at E={energy}"
        )
    psi0 = model_part / norm
    if np.iscomplexobj(psi0) and np.all(psi0.imag == 0):
        psi0 = psi0.real
    wave = omega_bar(spectrum, pspace, potential, energy).block @ psi0
    return BranchSolveReport(
        branch=branch,
        energy=float(energy),
        iterations=evals,
        residual=float(residual),
        wave_column=wave,
        model_vector=psi0,
    )


def oracle_scan(spectrum, pspace, potential, e_range, n_grid=201):
    """Brute-force oracle: tabulate every eigen-branch of H0 + V(E) on a
    grid, continue branches by eigenvector overlap, and bisect every sign
    change of g_j(E) - E to machine-level accuracy.

    Returns deduplicated :class:`Root` records sorted by energy.  Candidate
    crossings whose refined residual stays above 1e-9 (pole artifacts) are
    dropped.
    """
    lo, hi = float(e_range[0]), float(e_range[1])
    if not hi > lo:
        raise ValueError(f"scan range must be increasing, got ({lo}, {hi})")
    if n_grid < 2:
        raise ValueError(f"need at least 2 grid points, got {n_grid}")
    grid = np.linspace(lo, hi, int(n_grid))
    n = spectrum.size

    values = np.empty((n, grid.size))
    prev_vectors = None
    vectors_at = []
    for i, e in enumerate(grid):
        eigsys = eig_general(full_hamiltonian(spectrum, potential, e))
        vr = eigsys.right_vectors
        if prev_vectors is None:
            order = np.arange(n)
        else:
            # assignment matching keeps branch labels attached to physical
            # eigenvectors even when eigenvalue ordering swaps along E
            cost = -np.abs(prev_vectors.conj().T @ vr) / np.outer(
                np.linalg.norm(prev_vectors, axis=0), np.linalg.norm(vr, axis=0))
            _, order = linear_sum_assignment(cost)
        values[:, i] = np.real(eigsys.values[order])
        prev_vectors = vr[:, order]
        vectors_at.append(prev_vectors)

    roots = []
    for j in range(n):
        phi = values[j, :] - grid
        for i in range(grid.size - 1):
            fa, fb = phi[i], phi[i + 1]
            if fa == 0.0:
                roots.append(Root(branch=j, energy=float(grid[i])))
                continue
            if i == grid.size - 2 and fb == 0.0:
                roots.append(Root(branch=j, energy=float(grid[i + 1])))
                continue
            if np.sign(fa) * np.sign(fb) < 0:
                root = _bisect_branch(spectrum, potential, grid[i], grid[i + 1],
                                      fa, fb, vectors_at[i][:, j])
                if root is not None:
                    roots.append(Root(branch=j, energy=root))

    deduped = []
    for root in sorted(roots, key=lambda r: (r.branch, r.energy)):
        if any(r.branch == root.branch and abs(r.energy - root.energy) <= ROOT_DEDUP_TOL
               for r in deduped):
            continue
        deduped.append(root)
    return sorted(deduped, key=lambda r: (r.energy, r.branch))


def _bisect_branch(spectrum, potential, a, b, fa, fb, ref_vector):
    """Bisect g(E)-E on one branch between grid nodes; returns None when the
    crossing does not refine to a genuine root (e.g. a pole artifact)."""
    ref = ref_vector

    def phi(e, ref):
        eigsys = eig_general(full_hamiltonian(spectrum, potential, e))
        overlaps = [_overlap(ref, eigsys.right_vectors[:, k]) for k in range(eigsys.dim)]
        k = int(np.argmax(overlaps))
        if overlaps[k] < BRANCH_OVERLAP_MIN:
            return None, ref
        return float(np.real(eigsys.values[k])) - e, eigsys.right_vectors[:, k]

    for _ in range(80):
        mid = 0.5 * (a + b)
        fm, ref = phi(mid, ref)
        if fm is None:
            return None
        if fm == 0.0:
            a = b = mid
            break
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
        if (b - a) <= 1e-15 * max(1.0, abs(a), abs(b)):
            break
    root = 0.5 * (a + b)
    fr, _ = phi(root, ref)
    if fr is None or abs(fr) > 1e-9:
        return None
    return float(root)


def bs_bloch_solve(spectrum, pspace, potential, opts=None):
    """Damped fixed-point iteration of the commutator equation on the model
    space: update H'_eff from V(H_eff) Omega, then the complement rows of
    Omega from [V(H_eff) Omega - Omega H'_eff] / (E_m - eps_q), reimpose
    intermediate normalization, and mix.

    Converges when both increments fall below ``opts.tol`` in max norm.
    """
    opts = opts if opts is not None else SolveOptions()
    p = list(pspace.p_indices)
    n = spectrum.size
    d = len(p)
    q = list(pspace.q_indices(n))
    em = spectrum.h0_diagonal[p]
    eq = spectrum.h0_diagonal[q]
    if q:
        gaps = em[None, :] - eq[:, None]
        if np.min(np.abs(gaps)) < opts.gap_floor:
            raise DivergedError(
                f"model/complement gap {np.min(np.abs(gaps)):.3e} below floor "
                f"{opts.gap_floor:.0e}; fixed-point update would blow up"
            )

    omega = WaveOperator.injection(n, pspace.p_indices).block
    hint = np.zeros((d, d))
    h0_part = np.diag(em)
    eye_d = np.eye(d)
    eta = opts.mixing
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"mixing factor must be in (0, 1], got {eta}")

    trace = []
    max_drift = 0.0
    best_residual = np.inf
    growth_streak = 0
    prev_residual = None
    converged = False
    sweeps = 0
    for sweeps in range(1, opts.max_sweeps + 1):
        heff = h0_part + hint
        vom = apply_function_of_heff(potential, heff, omega)
        hint_new = vom[p, :]
        heff_new = h0_part + hint_new
        vom_new = apply_function_of_heff(potential, heff_new, omega)
        numer = vom_new - omega @ hint_new
        om_new = np.zeros((n, d), dtype=np.result_type(numer, float))
        if q:
            om_new[q, :] = numer[q, :] / gaps
        om_new[p, :] = eye_d

        om_mixed = (1.0 - eta) * omega + eta * om_new
        hint_mixed = (1.0 - eta) * hint + eta * hint_new
        d_om = float(np.max(np.abs(om_mixed - omega))) if om_mixed.size else 0.0
        d_h = float(np.max(np.abs(hint_mixed - hint)))
        residual = max(d_om, d_h)
        trace.append((d_om, d_h))
        omega = om_mixed
        hint = hint_mixed
        max_drift = max(max_drift, float(np.max(np.abs(omega[p, :] - eye_d))))

        if residual < opts.tol:
            converged = True
            break
        if prev_residual is not None and residual > prev_residual and opts.adapt_mixing:
            eta = max(eta / 2.0, 1.0 / 64.0)
        if residual > 10.0 * best_residual:
            growth_streak += 1
            if growth_streak >= opts.divergence_window:
                raise DivergedError(
                    f"fixed-point residual grew {growth_streak} sweeps in a row "
                    f"(now {residual:.3e}, best {best_residual:.3e})"
                )
        else:
            growth_streak = 0
        best_residual = min(best_residual, residual)
        prev_residual = residual
    if not converged:
        raise DivergedError(
            f"no convergence in {opts.max_sweeps} sweeps "
            f"(last residual {trace[-1] if trace else None})"
        )

    if np.iscomplexobj(omega) and np.allclose(omega.imag, 0.0, atol=0.0):
        omega = omega.real
    heff = EffectiveHamiltonian(h0_part=h0_part, interaction=hint)
    eigsys = eig_general(heff.matrix)
    wave_op = WaveOperator(block=omega, p_indices=pspace.p_indices)

    residuals = np.empty(d)
    for alpha in range(d):
        e_a = eigsys.values[alpha]
        if e_a.imag == 0:
            e_a = e_a.real
        psi0 = eigsys.right_vectors[:, alpha]
        psi0 = psi0 / np.linalg.norm(psi0)
        wave = omega @ psi0
        v_at = potential.evaluate(e_a)
        res = (e_a - spectrum.h0_diagonal) * wave - v_at @ wave
        scale = 1.0 + np.linalg.norm(v_at)
        residuals[alpha] = float(np.linalg.norm(res) / scale)
        if residuals[alpha] > opts.residual_tol:
            raise DivergedError(
                f"converged state {alpha} fails the fixed-point equation: "
                f"residual {residuals[alpha]:.3e} > {opts.residual_tol:.0e}"
            )

    return BsBlochState(
        omega=wave_op,
        heff=heff,
        energies=eigsys.values,
        right_model=eigsys.right_vectors,
        left_model=eigsys.left_vectors,
        iterations=sweeps,
        trace=trace,
        bsa_residuals=residuals,
        max_normalization_drift=max_drift,
    )
