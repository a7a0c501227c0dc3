"""Order-by-order Rayleigh-Schrodinger machinery for energy-dependent
interactions on (quasi-)degenerate model spaces.

Each model column m is built with its own zeroth-order energy E_m.  The
counterterm remainders (model-space contributions, "folds") couple pairs of
model states through difference ratios of whole operator-valued functions
of the energy parameter:

    order 2:  Omega(2) = Gq V Gq V  +  d(Omega(1))*H(1)
    order 3:  Omega(3) = Gq V Gq V Gq V + d(Omega(1))*Hbar(2) + d(Omega(2))*H(1)

where d(.)* is a first-order difference ratio between the energies of the
model states the fold connects, and the order-2 object inside the last term
is differenced as a whole, which unfolds into second-order difference
ratios.  Coincident model energies switch the affected slot to the analytic
derivative; that cancellation is what keeps quasi-degenerate ledgers finite.

``bloch_iterate`` provides the classic commutator-equation recursion for
energy-independent potentials, used as an independent cross-check.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PoleHitError
from .model import POLE_TOL, reduced_resolvent_diag

_MSC_MODES = ("auto", "derivative")


@dataclass(frozen=True)
class WaveOperator:
    """Wave-operator block (N x d) in intermediate normalization.

    Columns are model states; the model-space rows form the d x d identity.
    """

    block: np.ndarray
    p_indices: tuple

    def __post_init__(self):
        block = np.asarray(self.block)
        idx = tuple(int(i) for i in self.p_indices)
        if block.ndim != 2 or block.shape[1] != len(idx):
            raise ValueError(f"wave-operator block shape {block.shape} does not "
                             f"match {len(idx)} model states")
        if not np.all(np.isfinite(block)):
            raise ValueError("wave-operator block has non-finite entries")
        drift = np.max(np.abs(block[list(idx), :] - np.eye(len(idx))))
        if drift > 1e-12:
            raise ValueError(f"intermediate normalization violated by {drift:.3e}")
        object.__setattr__(self, "block", block)
        object.__setattr__(self, "p_indices", idx)

    @classmethod
    def injection(cls, n, p_indices):
        """The zeroth-order wave operator: unit columns on the model states."""
        idx = tuple(int(i) for i in p_indices)
        block = np.zeros((n, len(idx)))
        for col, i in enumerate(idx):
            block[i, col] = 1.0
        return cls(block=block, p_indices=idx)

    @property
    def dim(self):
        return self.block.shape[1]


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """d x d effective Hamiltonian split as PH0P + interaction part."""

    h0_part: np.ndarray
    interaction: np.ndarray

    def __post_init__(self):
        h0 = np.asarray(self.h0_part)
        w = np.asarray(self.interaction)
        if h0.shape != w.shape or h0.ndim != 2 or h0.shape[0] != h0.shape[1]:
            raise ValueError(f"effective-Hamiltonian parts disagree: {h0.shape} vs {w.shape}")
        object.__setattr__(self, "h0_part", h0)
        object.__setattr__(self, "interaction", w)

    @classmethod
    def for_model_space(cls, spectrum, pspace, interaction):
        return cls(np.diag(pspace.energies(spectrum)), interaction)

    @property
    def matrix(self):
        return self.h0_part + self.interaction

    @property
    def dim(self):
        return self.h0_part.shape[0]


@dataclass
class LedgerEntry:
    """One expansion order: wave-operator and interaction increments.

    ``msc_omega``/``msc_heff`` isolate the fold (counterterm-remainder)
    share already contained in ``omega``/``heff``.
    """

    omega: np.ndarray
    heff: np.ndarray
    msc_omega: np.ndarray
    msc_heff: np.ndarray


@dataclass
class ExpansionLedger:
    """Per-order increments Omega^(n), H_eff^(n) for one scenario."""

    p_indices: tuple
    basis_size: int
    orders: dict = field(default_factory=dict)

    def require(self, *orders):
        for n in orders:
            if n not in self.orders:
                raise ValueError(f"expansion ledger is missing order {n}")

    def heff_total(self, through=None):
        """Sum of interaction increments through the given order."""
        ns = sorted(self.orders)
        if through is not None:
            ns = [n for n in ns if n <= through]
        d = len(self.p_indices)
        out = np.zeros((d, d))
        for n in ns:
            out = out + self.orders[n].heff
        return out

    def omega_total(self, through=None):
        """Full wave operator: injection plus increments through an order."""
        ns = sorted(self.orders)
        if through is not None:
            ns = [n for n in ns if n <= through]
        block = WaveOperator.injection(self.basis_size, self.p_indices).block
        for n in ns:
            block = block + self.orders[n].omega
        return block


class _EnergyFunction:
    """Operator-valued function of the energy parameter with analytic
    derivatives, memoized per energy, plus confluent difference ratios."""

    def __init__(self, derivs_fn):
        self._derivs_fn = derivs_fn
        self._cache = {}

    def derivs(self, energy, upto):
        key = float(energy)
        have = self._cache.get(key)
        if have is None or len(have) <= upto:
            have = self._derivs_fn(energy, upto)
            self._cache[key] = have
        return have

    def value(self, energy):
        return self.derivs(energy, 0)[0]

    def deriv(self, energy, k):
        return self.derivs(energy, k)[k]

    def dd1(self, a, b):
        """First difference ratio [f(a) - f(b)] / (a - b), derivative at a == b."""
        if a == b:
            return self.deriv(a, 1)
        return (self.value(a) - self.value(b)) / (a - b)

    def dd2(self, a, b, c):
        """Second-order difference ratio over three (possibly equal) points."""
        x, y, z = sorted((a, b, c))
        first = self.deriv(x, 1) if x == y else (self.value(y) - self.value(x)) / (y - x)
        second = self.deriv(y, 1) if y == z else (self.value(z) - self.value(y)) / (z - y)
        if x == z:
            return self.deriv(x, 2) / 2.0
        return (second - first) / (z - x)


def _leibniz(a_list, b_list, product):
    """Derivative lists of a product from derivative lists of the factors."""
    upto = min(len(a_list), len(b_list)) - 1
    out = []
    for k in range(upto + 1):
        acc = None
        for i in range(k + 1):
            piece = math.comb(k, i) * product(a_list[i], b_list[k - i])
            acc = piece if acc is None else acc + piece
        out.append(acc)
    return out


class _Context:
    """Shared operator functions for one (spectrum, model space, potential)."""

    def __init__(self, spectrum, pspace, potential):
        self.spectrum = spectrum
        self.pspace = pspace
        self.potential = potential
        self.p = list(pspace.p_indices)
        self.energies = spectrum.h0_diagonal[self.p]
        self.n = spectrum.size
        self.d = len(self.p)

        def gq_derivs(e, upto):
            g = reduced_resolvent_diag(spectrum, pspace, e)
            # d^k/dE^k 1/(E-eps) = (-1)^k k! (E-eps)^(-k-1)
            return [((-1) ** k) * math.factorial(k) * g ** (k + 1) for k in range(upto + 1)]

        def v_derivs(e, upto):
            vals = [potential.evaluate(e)]
            for k in range(1, upto + 1):
                vals.append(potential.derivative(e, k))
            return vals

        def vp_derivs(e, upto):
            return [v[:, self.p] for v in v_derivs(e, upto)]

        def scale_rows(g, m):
            return g[:, None] * m

        def ob1p(e, upto):
            return _leibniz(gq_derivs(e, upto), vp_derivs(e, upto), scale_rows)

        def ob2p(e, upto):
            inner = _leibniz(v_derivs(e, upto), ob1p(e, upto), np.matmul)
            return _leibniz(gq_derivs(e, upto), inner, scale_rows)

        def ob3p(e, upto):
            inner = _leibniz(v_derivs(e, upto), ob2p(e, upto), np.matmul)
            return _leibniz(gq_derivs(e, upto), inner, scale_rows)

        def h1f(e, upto):
            return [v[self.p, :] for v in vp_derivs(e, upto)]

        def hb2f(e, upto):
            vo = _leibniz(v_derivs(e, upto), ob1p(e, upto), np.matmul)
            return [m[self.p, :] for m in vo]

        def hb3f(e, upto):
            vo = _leibniz(v_derivs(e, upto), ob2p(e, upto), np.matmul)
            return [m[self.p, :] for m in vo]

        self.ob1p = _EnergyFunction(ob1p)
        self.ob2p = _EnergyFunction(ob2p)
        self.ob3p = _EnergyFunction(ob3p)
        self.h1f = _EnergyFunction(h1f)
        self.hb2f = _EnergyFunction(hb2f)
        self.hb3f = _EnergyFunction(hb3f)

    def fold1(self, fn, a_energy, b_energy, mode):
        """Fold difference ratio; 'derivative' mode anchors at the incoming energy."""
        if mode == "derivative":
            return fn.deriv(b_energy, 1)
        return fn.dd1(a_energy, b_energy)

    def fold2(self, fn, a_energy, b_energy, c_energy, mode):
        if mode == "derivative":
            return fn.deriv(b_energy, 2) / 2.0
        return fn.dd2(a_energy, b_energy, c_energy)


def _check_mode(msc_mode):
    if msc_mode not in _MSC_MODES:
        raise ValueError(f"msc_mode must be one of {_MSC_MODES}, got {msc_mode!r}")


def _stack_columns(columns):
    return np.stack(columns, axis=-1)


def omega1(spectrum, pspace, potential):
    """First-order wave-operator increment: column m is Gq(E_m) V(E_m) e_m."""
    ctx = _Context(spectrum, pspace, potential)
    return _stack_columns([ctx.ob1p.value(em)[:, m] for m, em in enumerate(ctx.energies)])


def heff1(spectrum, pspace, potential):
    """First-order effective interaction: element (m', m) = (P V(E_m) P)_{m'm}."""
    ctx = _Context(spectrum, pspace, potential)
    return _stack_columns([ctx.h1f.value(em)[:, m] for m, em in enumerate(ctx.energies)])


def _order2_columns(ctx, lead2, lead1, h1, msc_mode):
    """Order-2 assembly: barred two-interaction chain plus one fold."""
    bar_cols = []
    msc_cols = []
    for m, em in enumerate(ctx.energies):
        bar_cols.append(lead2.value(em)[:, m])
        col = None
        for mp, emp in enumerate(ctx.energies):
            piece = ctx.fold1(lead1, emp, em, msc_mode)[:, mp] * h1[mp, m]
            col = piece if col is None else col + piece
        msc_cols.append(col)
    return _stack_columns(bar_cols), _stack_columns(msc_cols)


def omega2(spectrum, pspace, potential, ledger, msc_mode="auto"):
    """Second-order increment with its model-space counterterm remainder."""
    _check_mode(msc_mode)
    ledger.require(1)
    ctx = _Context(spectrum, pspace, potential)
    bar, msc = _order2_columns(ctx, ctx.ob2p, ctx.ob1p, ledger.orders[1].heff, msc_mode)
    return bar + msc, msc


def heff2(spectrum, pspace, potential, ledger, msc_mode="auto"):
    """Second-order effective interaction; the fold part vanishes for
    energy-independent potentials."""
    _check_mode(msc_mode)
    ledger.require(1)
    ctx = _Context(spectrum, pspace, potential)
    bar, msc = _order2_columns(ctx, ctx.hb2f, ctx.h1f, ledger.orders[1].heff, msc_mode)
    return bar + msc, msc


def _order3_columns(ctx, lead3, lead2, lead1, h1, msc_mode):
    """Order-3 assembly pattern shared by the wave operator and the
    effective interaction.

    lead3(E) is the three-interaction no-model-state chain, lead1/lead2 the
    order-1/2 chains whose difference ratios build the folds.  The fold of
    the full order-2 object is differenced as a whole: its internal fold
    expands into a product-rule pair of first-order ratios plus a genuine
    second-order ratio (three-point confluent divided difference).
    """
    bar_cols = []
    msc_cols = []
    for m, em in enumerate(ctx.energies):
        bar_cols.append(lead3.value(em)[:, m])
        hb2_at_em = ctx.hb2f.value(em)
        h1_at_em = ctx.h1f.value(em)
        msc = None
        for mpp, empp in enumerate(ctx.energies):
            # fold of the order-1 chain against the barred order-2 interaction
            piece = ctx.fold1(lead1, empp, em, msc_mode)[:, mpp] * hb2_at_em[mpp, m]
            msc = piece if msc is None else msc + piece
            # fold of the whole order-2 object against H^(1)
            col = ctx.fold1(lead2, empp, em, msc_mode)[:, mpp]
            for mp, emp in enumerate(ctx.energies):
                col = col + (
                    ctx.fold1(lead1, empp, emp, msc_mode)[:, mp]
                    * ctx.fold1(ctx.h1f, empp, em, msc_mode)[mp, mpp]
                )
                col = col + (
                    ctx.fold2(lead1, empp, em, emp, msc_mode)[:, mp]
                    * h1_at_em[mp, mpp]
                )
            msc = msc + col * h1[mpp, m]
        msc_cols.append(msc)
    return _stack_columns(bar_cols), _stack_columns(msc_cols)


def omega3(spectrum, pspace, potential, ledger, msc_mode="auto"):
    """Third-order wave-operator increment with both fold terms."""
    _check_mode(msc_mode)
    ledger.require(1, 2)
    ctx = _Context(spectrum, pspace, potential)
    h1 = ledger.orders[1].heff
    bar, msc = _order3_columns(ctx, ctx.ob3p, ctx.ob2p, ctx.ob1p, h1, msc_mode)
    return bar + msc, msc


def heff3(spectrum, pspace, potential, ledger, msc_mode="auto"):
    """Third-order effective interaction with both fold terms."""
    _check_mode(msc_mode)
    ledger.require(1, 2)
    ctx = _Context(spectrum, pspace, potential)
    h1 = ledger.orders[1].heff
    bar, msc = _order3_columns(ctx, ctx.hb3f, ctx.hb2f, ctx.h1f, h1, msc_mode)
    return bar + msc, msc


def expand(spectrum, pspace, potential, max_order=3, msc_mode="auto"):
    """Fill an :class:`ExpansionLedger` through ``max_order`` (1..3)."""
    _check_mode(msc_mode)
    if not 1 <= max_order <= 3:
        raise ValueError(f"expansion is implemented through order 3, got {max_order}")
    ledger = ExpansionLedger(p_indices=pspace.p_indices, basis_size=spectrum.size)
    d = pspace.dim
    om1 = omega1(spectrum, pspace, potential)
    h1 = heff1(spectrum, pspace, potential)
    ledger.orders[1] = LedgerEntry(om1, h1, np.zeros_like(om1), np.zeros((d, d)))
    if max_order >= 2:
        om2, om2_msc = omega2(spectrum, pspace, potential, ledger, msc_mode)
        h2, h2_msc = heff2(spectrum, pspace, potential, ledger, msc_mode)
        ledger.orders[2] = LedgerEntry(om2, h2, om2_msc, h2_msc)
    if max_order >= 3:
        om3, om3_msc = omega3(spectrum, pspace, potential, ledger, msc_mode)
        h3, h3_msc = heff3(spectrum, pspace, potential, ledger, msc_mode)
        ledger.orders[3] = LedgerEntry(om3, h3, om3_msc, h3_msc)
    return ledger


def bloch_iterate(spectrum, pspace, potential, max_order):
    """Order-by-order solution of the commutator equation
    [Omega, H0] P = (V Omega - Omega H'_eff) P for an energy-independent V.

    Solved elementwise by dividing by (E_m - eps_q); requires nonvanishing
    model/complement gaps.  Independent cross-check for the difference-ratio
    expansion, to which it must agree order by order.
    """
    if not potential.energy_independent:
        raise ValueError("bloch_iterate requires an energy-independent potential")
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    p = list(pspace.p_indices)
    n = spectrum.size
    d = len(p)
    q = list(pspace.q_indices(n))
    energies = spectrum.h0_diagonal[p]
    w = potential.evaluate(0.0)

    gaps = energies[None, :] - spectrum.h0_diagonal[q][:, None] if q else np.zeros((0, d))
    if q and np.min(np.abs(gaps)) <= POLE_TOL:
        bad = np.unravel_index(np.argmin(np.abs(gaps)), gaps.shape)
        raise PoleHitError(
            f"commutator recursion pole: model state {p[bad[1]]} degenerate with "
            f"complement state {q[bad[0]]}",
            energy=float(energies[bad[1]]),
            detail={"state": q[bad[0]]},
        )

    ledger = ExpansionLedger(p_indices=pspace.p_indices, basis_size=n)
    omega_orders = {0: WaveOperator.injection(n, pspace.p_indices).block}
    heff_orders = {}
    for order in range(1, max_order + 1):
        chained = w @ omega_orders[order - 1]
        heff_orders[order] = chained[p, :]
        fold = np.zeros((n, d), dtype=chained.dtype)
        for k in range(1, order):
            fold = fold - omega_orders[order - k] @ heff_orders[k]
        om = np.zeros((n, d), dtype=chained.dtype)
        msc = np.zeros((n, d), dtype=chained.dtype)
        if q:
            om[q, :] = (chained[q, :] + fold[q, :]) / gaps
            msc[q, :] = fold[q, :] / gaps
        omega_orders[order] = om
        ledger.orders[order] = LedgerEntry(om, heff_orders[order], msc, np.zeros((d, d)))
    return ledger
