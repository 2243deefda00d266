"""
Genus-1 reconstruction pipeline.

This module provides:
- GMatrix and SOperator: the genus-0 two-point data at tau, per level
- compute_tau(): the fixed point tau of the contraction T, with its iterates
- compute_tbar(): the ancestor inputs tbar_r = [S_r(v + t_r)]+ - v
- compute_A_and_jacobian() and jacobian_oracle(): A_r, (I - A_r)^-1 and
  the formal-perturbation check of dtau_r/dt_{r,0}
- compute_y(), compute_y2L(), case2_jets(), chain_expansion()
- assemble_F1M() for M = 2, 3, 4, 6 and their residues
- reconstruct_f1(): F_1(t) = F_1(tau) + logdet + sum of residues at 0 and infinity

Level r quantities use R_r: tau is replaced by (tau_r, tau_2r, ...) and
Novikov degrees d by r d.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

from qkrec.correlators import (
    CorrelatorBackend,
    Insertion,
    TauVector,
    no_descendant_potential,
)
from qkrec.errors import ConvergenceError, ResummationError
from qkrec.qfun import (
    INFINITY,
    POINT_BASIS,
    Basis,
    KVector,
    LaurentQ,
    RationalQ,
    binomial,
    component,
    expansion_at,
    jet_at_root,
    laurent_part,
    rational_matrix_inverse,
    rational_times_scalar,
    residue_form,
    residue_points,
    subst_inverse_power,
    subst_power,
    t2_new_transform,
)
from qkrec.ring import ONE, CycloRational, Series, SeriesRingConfig, as_cyclo, root_of_unity
from qkrec.utils import validate_toggles

logger = logging.getLogger(__name__)

Matrix = List[List[Series]]
T = TypeVar("T")

# Levels whose data enters the genus-1 assembly
RECONSTRUCTION_LEVELS = (1, 2, 3, 4, 6)
CASES = (2, 3, 4, 6)
CASE_PREFACTORS = {2: Fraction(1, 24), 3: Fraction(1, 6), 4: Fraction(1, 4), 6: Fraction(1, 6)}
# Roots of unity attached to each case, as exponents of zeta_12
CASE_ROOTS = {2: (6,), 3: (8, 4), 4: (3, 9), 6: (2, 10)}
LOGDET_PREFACTOR = Fraction(1, 24)
DEFAULT_MAX_RESUM_TERMS = 40


# =============================================================================
# MATRICES OVER THE COEFFICIENT RING
# =============================================================================


def identity_matrix(config: SeriesRingConfig, rank: int) -> Matrix:
    return [[Series.one(config) if a == b else Series.zero(config) for b in range(rank)] for a in range(rank)]


def zero_matrix(config: SeriesRingConfig, rank: int) -> Matrix:
    return [[Series.zero(config) for _ in range(rank)] for _ in range(rank)]


def mat_add(a: Matrix, b: Matrix) -> Matrix:
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_sub(a: Matrix, b: Matrix) -> Matrix:
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    n, m = len(a), len(b[0])
    config = a[0][0].config
    out = [[Series.zero(config) for _ in range(m)] for _ in range(n)]
    for i in range(n):
        for k, aik in enumerate(a[i]):
            if aik.is_zero():
                continue
            for j in range(m):
                if not b[k][j].is_zero():
                    out[i][j] = out[i][j] + aik * b[k][j]
    return out


def mat_is_zero(a: Matrix) -> bool:
    return all(x.is_zero() for row in a for x in row)


def mat_truncate(a: Matrix, order: int) -> Matrix:
    return [[x.truncate(order) for x in row] for row in a]


def mat_apply(a: Matrix, vector: KVector) -> KVector:
    """(a v)^alpha = sum_beta a[alpha][beta] v^beta."""
    comps = []
    for row in a:
        total = Series.zero(vector.config)
        for x, v in zip(row, vector.components):
            if not x.is_zero() and not v.is_zero():
                total = total + x * v
        comps.append(total)
    return KVector(vector.basis, comps)


def mat_inverse(a: Matrix) -> Matrix:
    """
    Inverse of a matrix whose constant part P is an invertible rational matrix.

    With a = P + E, E in the maximal ideal:
    a^-1 = sum_k (-P^-1 E)^k P^-1, finite by truncation.

    Raises:
        ValueError: If the constant part is singular or not rational
    """
    config = a[0][0].config
    rank = len(a)
    constant = [[x.constant_term().rational_value() for x in row] for row in a]
    p_inv = [[Series.constant(config, x) for x in row] for row in rational_matrix_inverse(constant)]
    # -P^-1 E
    nilpotent = [[-x for x in row] for row in mat_mul(p_inv, mat_sub(a, _constant_matrix(config, constant)))]
    total = identity_matrix(config, rank)
    power = identity_matrix(config, rank)
    for _ in range(config.truncation_order):
        power = mat_mul(power, nilpotent)
        if mat_is_zero(power):
            break
        total = mat_add(total, power)
    return mat_mul(total, p_inv)


def _constant_matrix(config: SeriesRingConfig, rows: Sequence[Sequence[Fraction]]) -> Matrix:
    return [[Series.constant(config, x) for x in row] for row in rows]


def mat_det(a: Matrix) -> Series:
    """Determinant by Laplace expansion along the first row."""
    if len(a) == 1:
        return a[0][0]
    total = Series.zero(a[0][0].config)
    for j, x in enumerate(a[0]):
        if x.is_zero():
            continue
        minor = [row[:j] + row[j + 1 :] for row in a[1:]]
        term = x * mat_det(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def geometric_sum(a: Matrix, order: int) -> Matrix:
    """sum_{k <= order} a^k, i.e. (I - a)^-1 for a in the maximal ideal."""
    config = a[0][0].config
    total = identity_matrix(config, len(a))
    power = identity_matrix(config, len(a))
    for _ in range(order):
        power = mat_mul(power, a)
        if mat_is_zero(power):
            break
        total = mat_add(total, power)
    return total


def matrix_to_json(a: Matrix) -> List[List[Dict[str, Any]]]:
    return [[x.to_json() for x in row] for row in a]


# =============================================================================
# GEOMETRIC-SLOT RESUMMATION
# =============================================================================


def stabilized_differences(sample: Callable[[int], T], max_terms: int) -> List[T]:
    """
    Forward differences Delta^j c_0, j = 0..d, of a sequence polynomial in k.

    d is the smallest degree with Delta^(d+1) c_j = 0 for j = 0..3, so the
    pattern is confirmed on three samples beyond the ones that fix it.

    Args:
        sample: k -> c_k; values support subtraction and is_zero()
        max_terms: Largest number of samples allowed

    Raises:
        ResummationError: If no degree stabilizes within max_terms samples
    """
    samples: List[T] = []
    degree = 0
    while True:
        needed = degree + 5
        if needed > max_terms:
            raise ResummationError(
                f"polynomial pattern did not stabilize within {max_terms} terms"
            )
        while len(samples) < needed:
            samples.append(sample(len(samples)))
        rows = [samples]
        for _ in range(degree + 1):
            prev = rows[-1]
            rows.append([prev[i + 1] - prev[i] for i in range(len(prev) - 1)])
        if all(rows[degree + 1][j].is_zero() for j in range(4)):
            logger.debug("resummation stabilized at degree %d after %d samples", degree, needed)
            return [rows[j][0] for j in range(degree + 1)]
        degree += 1


def _minus_one_power(m: int) -> CycloRational:
    return as_cyclo(-1 if m % 2 else 1)


def resum_in_inverse_q(diffs: Sequence[KVector]) -> RationalQ:
    """sum_k c_k q^-k = sum_j Delta^j c_0 q / (q - 1)^(j+1)."""
    d = len(diffs) - 1
    numerator = LaurentQ.zero(diffs[0].basis, diffs[0].config)
    for j, c in enumerate(diffs):
        if c.is_zero():
            continue
        m = d - j
        poly = {i + 1: binomial(m, i) * _minus_one_power(m - i) for i in range(m + 1)}
        numerator = numerator + LaurentQ.from_poly(poly, c)
    return RationalQ(numerator, [(ONE, d + 1)])


def resum_in_x(diffs: Sequence[KVector]) -> RationalQ:
    """sum_k c_k x^k = sum_j Delta^j c_0 x^j / (1 - x)^(j+1)."""
    d = len(diffs) - 1
    numerator = LaurentQ.zero(diffs[0].basis, diffs[0].config)
    for j, c in enumerate(diffs):
        if c.is_zero():
            continue
        m = d - j
        sign = _minus_one_power(j + 1)
        poly = {j + i: sign * binomial(m, i) * _minus_one_power(m - i) for i in range(m + 1)}
        numerator = numerator + LaurentQ.from_poly(poly, c)
    return RationalQ(numerator, [(ONE, d + 1)])


# =============================================================================
# G-MATRIX AND S-OPERATOR
# =============================================================================


@dataclass(frozen=True)
class GMatrix:
    """G_r = R_r [(phi_a, phi_b) + <<phi_a, phi_b>>_{0,2}] and its inverse."""

    level: int
    entries: Tuple[Tuple[Series, ...], ...]
    inverse: Tuple[Tuple[Series, ...], ...]

    def as_matrix(self) -> Matrix:
        return [list(row) for row in self.entries]

    def inverse_matrix(self) -> Matrix:
        return [list(row) for row in self.inverse]

    def raise_index(self, lowered: Sequence[Series], basis: Basis) -> KVector:
        """sum_{a,b} c_a G^{ab} phi_b for covector components c_a."""
        comps = []
        for b in range(basis.rank):
            total = Series.zero(lowered[0].config)
            for a, c in enumerate(lowered):
                if not c.is_zero():
                    total = total + c * self.inverse[a][b]
            comps.append(total)
        return KVector(basis, comps)

    def to_json(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "entries": matrix_to_json(self.as_matrix()),
            "inverse": matrix_to_json(self.inverse_matrix()),
        }


def _basis_vectors(basis: Basis, config: SeriesRingConfig) -> List[KVector]:
    return [KVector.basis_vector(basis, config, a) for a in range(basis.rank)]


def compute_G(backend: CorrelatorBackend, tau: TauVector, r: int = 1) -> GMatrix:
    """
    G_r at tau.

    Raises:
        ValueError: If the pairing part is singular
    """
    basis, config = tau.basis, tau.config
    shifted = tau.shift(r)
    phis = _basis_vectors(basis, config)
    rows = []
    for a in range(basis.rank):
        row = []
        for b in range(basis.rank):
            value = Series.constant(config, basis.pairing[a][b])
            if not shifted.is_zero():
                value = value + backend.double_bracket(
                    0, [Insertion.constant(1, phis[a]), Insertion.constant(1, phis[b])], shifted, adams=r
                )
            row.append(value)
        rows.append(row)
    inverse = mat_inverse(rows)
    return GMatrix(
        level=r,
        entries=tuple(tuple(row) for row in rows),
        inverse=tuple(tuple(row) for row in inverse),
    )


class SOperator:
    """
    S_r(q) = R_r S(q) at tau, acting on K-valued Laurent polynomials.

    S(q) phi = sum ((phi, phi_a) + <<phi / (1 - L/q), phi_a>>_{0,2}) G^{ab} phi_b,
    the descendant slot resummed into poles at q = 1.
    """

    def __init__(
        self,
        backend: CorrelatorBackend,
        tau: TauVector,
        r: int = 1,
        G: Optional[GMatrix] = None,
        max_resum_terms: int = DEFAULT_MAX_RESUM_TERMS,
    ):
        self.backend = backend
        self.tau = tau
        self.r = r
        self.basis = tau.basis
        self.config = tau.config
        self.G = G or compute_G(backend, tau, r)
        self.max_resum_terms = max_resum_terms
        self._shifted = tau.shift(r)
        self._columns: Dict[int, RationalQ] = {}

    def _bracket(self, gamma: int, alpha: int) -> RationalQ:
        """
        sum_k q^-k <<phi_gamma L^k, phi_alpha>>, scalar valued.

        With r-cycle insertions the samples are quasi-polynomial in k with
        period P = lcm of the tau levels, so each residue class s mod P is
        resummed in Q = q^P and the pieces recombined as q^-s R_s(q^P).
        """
        phi_gamma = KVector.basis_vector(self.basis, self.config, gamma)
        phi_alpha = Insertion.constant(1, KVector.basis_vector(self.basis, self.config, alpha))

        def sample(k: int) -> KVector:
            head = Insertion(1, LaurentQ.monomial(k, phi_gamma))
            value = self.backend.double_bracket(0, [head, phi_alpha], self._shifted, adams=self.r)
            return KVector.scalar(value)

        period = math.lcm(*self._shifted.levels())
        if period == 1:
            return resum_in_inverse_q(stabilized_differences(sample, self.max_resum_terms))
        total = RationalQ.zero(POINT_BASIS, self.config)
        for s in range(period):
            diffs = stabilized_differences(lambda m, s=s: sample(period * m + s), self.max_resum_terms)
            total = total + subst_power(resum_in_inverse_q(diffs), period).shift(-s)
        return total

    def column(self, gamma: int) -> RationalQ:
        """S_r(q) phi_gamma."""
        if gamma in self._columns:
            return self._columns[gamma]
        result = RationalQ.zero(self.basis, self.config)
        for alpha in range(self.basis.rank):
            raised = self.G.raise_index(
                [Series.one(self.config) if a == alpha else Series.zero(self.config) for a in range(self.basis.rank)],
                self.basis,
            )
            scalar = RationalQ(LaurentQ.scalar(self.config, {0: Series.constant(self.config, self.basis.pairing[gamma][alpha])}))
            if not self._shifted.is_zero():
                scalar = scalar + self._bracket(gamma, alpha)
            if scalar.is_zero():
                continue
            result = result + rational_times_scalar(RationalQ(LaurentQ.constant(raised)), scalar)
        self._columns[gamma] = result
        return result

    def apply(self, vector: KVector) -> RationalQ:
        """S_r(q) applied to a constant vector."""
        result = RationalQ.zero(self.basis, self.config)
        for gamma, coeff in enumerate(vector.components):
            if not coeff.is_zero():
                result = result + self.column(gamma).scale(coeff)
        return result

    def apply_laurent(self, w: LaurentQ) -> RationalQ:
        """sum_k q^k S_r(q) w_k."""
        result = RationalQ.zero(self.basis, self.config)
        for k, vector in w.items():
            result = result + self.apply(vector).shift(k)
        return result


def apply_S(
    backend: CorrelatorBackend,
    phi: KVector,
    tau: TauVector,
    r: int = 1,
    max_resum_terms: int = DEFAULT_MAX_RESUM_TERMS,
) -> RationalQ:
    """S_r(q) phi at tau, as a K-valued rational function of q."""
    return SOperator(backend, tau, r, max_resum_terms=max_resum_terms).apply(phi)


# =============================================================================
# TAU AND TBAR
# =============================================================================


@dataclass
class TauResult:
    """Fixed point of T with the iterates T^n(0) and the gap orders between them."""

    tau: TauVector
    iterates: List[TauVector] = field(default_factory=list)
    gap_orders: List[Union[int, float]] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def contracting(self) -> bool:
        """Gap orders strictly increase and the n-th gap has order at least n + 1."""
        increasing = all(a < b for a, b in zip(self.gap_orders, self.gap_orders[1:]))
        bounded = all(g >= n + 1 for n, g in enumerate(self.gap_orders))
        return increasing and bounded

    def to_json(self) -> Dict[str, Any]:
        return {
            "tau": self.tau.to_json(),
            "iterates": [it.to_json() for it in self.iterates],
            "gap_orders": [_order_json(g) for g in self.gap_orders],
            "iterations": self.iterations,
        }


def _order_json(order: Union[int, float]) -> Union[int, str]:
    return "inf" if order == math.inf else int(order)


def _level_inputs(t: Dict[int, LaurentQ], basis: Basis, config: SeriesRingConfig) -> Dict[int, LaurentQ]:
    """t_r for every level the reconstruction touches; absent levels are zero."""
    levels = sorted(set(RECONSTRUCTION_LEVELS) | set(t))
    return {r: t.get(r) or LaurentQ.zero(basis, config) for r in levels}


def _tau_map(
    backend: CorrelatorBackend,
    t: Dict[int, LaurentQ],
    tau: TauVector,
) -> TauVector:
    """T(tau)_r = t_r(1) + R_r[sum <<L Dt_r(L), phi_a>>_{0,2} G_r^{ab} phi_b]."""
    basis, config = tau.basis, tau.config
    levels: Dict[int, KVector] = {}
    for r, tr in t.items():
        value = tr.eval_at(1)
        head = tr.d_operator().shift(1)
        shifted = tau.shift(r)
        if not head.is_zero() and not shifted.is_zero():
            G = compute_G(backend, tau, r)
            lowered = [
                backend.double_bracket(
                    0, [Insertion(1, head), Insertion.constant(1, phi)], shifted, adams=r
                )
                for phi in _basis_vectors(basis, config)
            ]
            value = value + G.raise_index(lowered, basis)
        levels[r] = value
    return TauVector(basis, config, levels)


def compute_tau(
    backend: CorrelatorBackend,
    t: Dict[int, LaurentQ],
    basis: Basis,
    config: SeriesRingConfig,
) -> TauResult:
    """
    Iterate tau(n+1) = T(tau(n)) from tau(0) = 0 until the iterate is fixed.

    Args:
        backend: Correlator backend
        t: Level -> input t_r(q), coefficients in the maximal ideal
        basis: Target basis
        config: Coefficient ring (its truncation order is N)

    Returns:
        TauResult with every iterate and gap order

    Raises:
        ConvergenceError: If no fixed point is reached within N + 2 steps
    """
    tau = TauVector.zero(basis, config)
    result = TauResult(tau=tau, iterates=[tau])
    for step in range(config.truncation_order + 2):
        new = _tau_map(backend, t, tau)
        gap = new - tau
        result.gap_orders.append(gap.order())
        if gap.is_zero():
            result.tau = tau
            logger.debug("tau fixed after %d steps, gaps %s", step, result.gap_orders)
            return result
        logger.debug("tau step %d: gap order %s", step + 1, gap.order())
        tau = new
        result.iterates.append(tau)
    raise ConvergenceError(
        f"tau iteration did not reach a fixed point within {config.truncation_order + 2} steps"
    )


def compute_tbar(
    backend: CorrelatorBackend,
    t: Dict[int, LaurentQ],
    tau: TauVector,
    max_resum_terms: int = DEFAULT_MAX_RESUM_TERMS,
    levels: Optional[Sequence[int]] = None,
) -> Dict[int, LaurentQ]:
    """
    tbar_r = [S_r(v + t_r)]+ - v with v = (1 - q) 1.

    Levels default to every level the genus-1 assembly needs.

    Raises:
        ConvergenceError: If tbar_r(1) is not zero modulo the truncation
    """
    basis, config = tau.basis, tau.config
    v = LaurentQ.one_minus_q(basis, config)
    tbar: Dict[int, LaurentQ] = {}
    inputs = _level_inputs(t, basis, config)
    for r in levels if levels is not None else sorted(inputs):
        tr = inputs.get(r) or LaurentQ.zero(basis, config)
        op = SOperator(backend, tau, r, max_resum_terms=max_resum_terms)
        value = laurent_part(op.apply_laurent(v + tr)) - v
        residual = value.eval_at(1)
        if not residual.is_zero():
            raise ConvergenceError(
                f"tbar_{r}(1) has order {residual.order()}, expected > {config.truncation_order}"
            )
        tbar[r] = value
    return tbar


# =============================================================================
# A_r AND THE JACOBIAN
# =============================================================================


def a_insertion_jet(tbar: Dict[int, LaurentQ], r: int, a_insertion: str = "level") -> KVector:
    """The (q - 1)-coefficient of tbar_r ('level') or of tbar_1 ('base')."""
    source = tbar[r] if a_insertion == "level" else tbar[1]
    return jet_at_root(source, 1).derivative


def compute_A_and_jacobian(
    backend: CorrelatorBackend,
    r: int,
    tau: TauVector,
    tbar: Dict[int, LaurentQ],
    a_insertion: str = "level",
) -> Tuple[Matrix, Matrix]:
    """
    A_r = [sum_c G_r^{ac} R_r <<phi_c, tbar_{r,1}, phi_b>>_{0,3}] and (I - A_r)^-1.

    Returns:
        (A_r, sum_{k <= N} A_r^k)
    """
    basis, config = tau.basis, tau.config
    jet = a_insertion_jet(tbar, r, a_insertion)
    A = zero_matrix(config, basis.rank)
    if not jet.is_zero():
        G = compute_G(backend, tau, r)
        shifted = tau.shift(r)
        phis = _basis_vectors(basis, config)
        middle = Insertion.constant(1, jet)
        for b in range(basis.rank):
            lowered = [
                backend.double_bracket(
                    0, [Insertion.constant(1, phis[c]), middle, Insertion.constant(1, phis[b])],
                    shifted,
                    adams=r,
                )
                for c in range(basis.rank)
            ]
            column = G.raise_index(lowered, basis)
            for a in range(basis.rank):
                A[a][b] = column.components[a]
    return A, geometric_sum(A, config.truncation_order)


def _fresh_name(config: SeriesRingConfig, stem: str = "delta") -> str:
    name = stem
    while name in config.variables:
        name += "_"
    return name


def jacobian_oracle(
    backend: CorrelatorBackend,
    t: Dict[int, LaurentQ],
    r: int,
    basis: Basis,
    config: SeriesRingConfig,
) -> Matrix:
    """
    dtau_r^a/dt_{r,0}^b by formal perturbation, modulo degree N.

    A fresh parameter delta is added to the q^0 coefficient of t_r along
    phi_b; the delta-linear part of the recomputed tau_r is column b.
    """
    name = _fresh_name(config)
    extended = config.extend(name)
    delta = Series.variable(extended, name)
    columns = []
    for b in range(basis.rank):
        perturbed = {k: v.embed(extended) for k, v in t.items()}
        bump = LaurentQ.constant(KVector.basis_vector(basis, extended, b, delta))
        perturbed[r] = perturbed[r] + bump if r in perturbed else bump
        tau_r = compute_tau(backend, perturbed, basis, extended).tau.get(r)
        columns.append(
            [c.partial_coefficient(name, 1, config).truncate(config.truncation_order - 1) for c in tau_r.components]
        )
    return [[columns[b][a] for b in range(basis.rank)] for a in range(basis.rank)]


# =============================================================================
# y_r, y_2^L AND THE CASE-2 JETS
# =============================================================================


def _sign(y_sign: str) -> int:
    return -1 if y_sign == "-" else 1


def bilinear_correction(
    backend: CorrelatorBackend,
    tau: TauVector,
    G1: GMatrix,
    c: KVector,
    level: int,
    x: KVector,
) -> KVector:
    """sum_{a,b} phi_a G_1^{ab} <<phi_b, c, x>>_{0,1_1+1_level+1_1}, c at the given level."""
    basis, config = tau.basis, tau.config
    if c.is_zero() or x.is_zero():
        return KVector.zero(basis, config)
    middle = Insertion.constant(level, c)
    last = Insertion.constant(1, x)
    lowered = [
        backend.double_bracket(0, [Insertion.constant(1, phi), middle, last], tau)
        for phi in _basis_vectors(basis, config)
    ]
    return G1.raise_index(lowered, basis)


def jacobian_shift(J: Matrix, basis: Basis, config: SeriesRingConfig) -> KVector:
    """dtau_r/dt_{r,0} applied to the unit, minus the unit."""
    unit = KVector.unit(basis, config)
    return mat_apply(J, unit) - unit


def compute_y(
    backend: CorrelatorBackend,
    r: int,
    tau: TauVector,
    tbar: Dict[int, LaurentQ],
    shift: KVector,
    G1: GMatrix,
    y_sign: str = "-",
) -> RationalQ:
    """
    y_r(q) = xbar_1(q) +/- sum phi_a G_1^{ab} <<phi_b, shift, xbar_1(q)>>.

    Args:
        shift: dtau_r/dt_{r,0} 1 - 1, inserted at level r
    """
    basis, config = tau.basis, tau.config
    xbar1 = LaurentQ.one_minus_q(basis, config) + tbar[1]
    s = _sign(y_sign)
    out: Dict[int, KVector] = {}
    for k, xk in xbar1.items():
        out[k] = xk + bilinear_correction(backend, tau, G1, shift, r, xk) * s
    return RationalQ(LaurentQ(basis, config, out))


def compute_y2L(
    backend: CorrelatorBackend,
    tau: TauVector,
    tbar: Dict[int, LaurentQ],
    G1: GMatrix,
    y_sign: str = "-",
) -> RationalQ:
    """
    y_2^L(q) = xbar_1(q) +/- sum phi_a G_1^{ab} <<phi_b, t2_new(q), xbar_1(q)>>.

    t2_new enters through its expansion at q = -1 up to (q + 1)^1 (principal
    part kept). Higher terms are regular at -1, so they leave the residue
    there unchanged, and dropping them removes the poles at q = -2 that
    negative q-powers of tbar_2 would create.
    """
    basis, config = tau.basis, tau.config
    xbar1 = LaurentQ.one_minus_q(basis, config) + tbar[1]
    t2_new = expansion_at(t2_new_transform(tbar.get(2, LaurentQ.zero(basis, config))), -1, 1)
    s = _sign(y_sign)
    out: Dict[int, KVector] = {}
    for a, na in t2_new.numerator.items():
        for k, xk in xbar1.items():
            term = bilinear_correction(backend, tau, G1, na, 2, xk) * s
            out[a + k] = out[a + k] + term if a + k in out else term
    correction = RationalQ(LaurentQ(basis, config, out), t2_new.poles)
    return RationalQ(xbar1) + correction


@dataclass(frozen=True)
class Case2Jets:
    """Jets at q = -1 in the coordinate (-q - 1) entering the involution case."""

    xbar_c: KVector
    xbar_a: KVector
    xbar_b: KVector
    ybar: KVector
    xbar_a_tick: KVector
    y2_value: KVector
    y2_derivative: KVector
    y2L_value: KVector
    y2L_derivative: KVector

    @property
    def consistent(self) -> bool:
        """jet(y_2) = (ybar, 'xbar^2a) and jet(y_2^L) = (xbar^2c, xbar^2a + xbar^2b)."""
        return (
            self.y2_value == self.ybar
            and self.y2_derivative == self.xbar_a_tick
            and self.y2L_value == self.xbar_c
            and self.y2L_derivative == self.xbar_a + self.xbar_b
        )

    def to_json(self) -> Dict[str, Any]:
        return {
            "xbar_2c": self.xbar_c.to_json(),
            "xbar_2a": self.xbar_a.to_json(),
            "xbar_2b": self.xbar_b.to_json(),
            "ybar": self.ybar.to_json(),
            "xbar_2a_tick": self.xbar_a_tick.to_json(),
            "consistent": self.consistent,
        }


def case2_jets(
    backend: CorrelatorBackend,
    tau: TauVector,
    tbar: Dict[int, LaurentQ],
    shift2: KVector,
    G1: GMatrix,
    y2: RationalQ,
    y2L: RationalQ,
    y_sign: str = "-",
) -> Case2Jets:
    """Decompose the jets of y_2 and y_2^L at -1 into the xbar and t2_new jets."""
    basis, config = tau.basis, tau.config
    s = _sign(y_sign)
    xbar1 = LaurentQ.one_minus_q(basis, config) + tbar[1]
    x_jet = jet_at_root(xbar1, -1)
    n_jet = jet_at_root(t2_new_transform(tbar[2]), -1)

    def corr(c: KVector, x: KVector) -> KVector:
        return bilinear_correction(backend, tau, G1, c, 2, x) * s

    y2_jet = jet_at_root(y2, -1)
    y2L_jet = jet_at_root(y2L, -1)
    return Case2Jets(
        xbar_c=x_jet.value + corr(n_jet.value, x_jet.value),
        xbar_a=x_jet.derivative + corr(n_jet.value, x_jet.derivative),
        xbar_b=corr(n_jet.derivative, x_jet.value),
        ybar=x_jet.value + corr(shift2, x_jet.value),
        xbar_a_tick=x_jet.derivative + corr(shift2, x_jet.derivative),
        y2_value=y2_jet.value,
        y2_derivative=y2_jet.derivative,
        y2L_value=y2L_jet.value,
        y2L_derivative=y2L_jet.derivative,
    )


def chain_expansion(
    backend: CorrelatorBackend,
    r: int,
    tau: TauVector,
    tbar: Dict[int, LaurentQ],
    A: Matrix,
    a_insertion: str = "level",
) -> KVector:
    """
    X + sum_{l >= 2} A_r^(l-2) G_r^-1 R_r <<phi, X, X>> with X = tbar_{r,1}.

    Equals dtau_r/dt_{r,0} 1 - 1 when the string equation holds.
    """
    basis, config = tau.basis, tau.config
    jet = a_insertion_jet(tbar, r, a_insertion)
    if jet.is_zero():
        return jet
    G = compute_G(backend, tau, r)
    x = Insertion.constant(1, jet)
    lowered = [
        backend.double_bracket(0, [Insertion.constant(1, phi), x, x], tau.shift(r), adams=r)
        for phi in _basis_vectors(basis, config)
    ]
    term = G.raise_index(lowered, basis)
    total = jet
    for _ in range(config.truncation_order + 1):
        if term.is_zero():
            break
        total = total + term
        term = mat_apply(A, term)
    return total


# =============================================================================
# GENUS-1 ASSEMBLY AND RESIDUES
# =============================================================================


def genus_one_geometric(
    backend: CorrelatorBackend,
    tau: TauVector,
    head: RationalQ,
    others: Sequence[Tuple[int, RationalQ]],
    max_resum_terms: int = DEFAULT_MAX_RESUM_TERMS,
) -> RationalQ:
    """
    <<head(x) / (1 - x Lbar), f_1(x), ...>>_1 as a scalar rational function of x.

    head sits at level 1; others are (level, function of x) pairs. The bracket
    is expanded over basis coordinates of every slot.

    Lbar is the ancestor class, pulled back along forgetting the level-1
    unit tau points (CorrelatorBackend.ancestor_bracket), not the descendant
    L of the full moduli space. With L the samples grow in k with every tau
    insertion and the resummed pole at x = 1 outlives the zeros of the slot
    functions there; with Lbar its order is at most the number of level-1
    slots, each slot function vanishes at x = 1, and F has no pole at 1.
    """
    basis, config = tau.basis, tau.config
    phis = _basis_vectors(basis, config)
    total = RationalQ.zero(POINT_BASIS, config)
    slots = [(1, head)] + list(others)
    coordinates = [[component(f, a) for a in range(basis.rank)] for _, f in slots]
    for alphas in product(range(basis.rank), repeat=len(slots)):
        factors = [coordinates[i][a] for i, a in enumerate(alphas)]
        if any(f.is_zero() for f in factors):
            continue
        tail = [Insertion.constant(level, phis[a]) for (level, _), a in zip(slots[1:], alphas[1:])]

        def sample(k: int, lead: int = alphas[0], tail: List[Insertion] = tail) -> KVector:
            first = Insertion(1, LaurentQ.monomial(k, phis[lead]))
            return KVector.scalar(backend.ancestor_bracket(1, [first] + tail, tau))

        resummed = resum_in_x(stabilized_differences(sample, max_resum_terms))
        if resummed.is_zero():
            continue
        for f in factors:
            resummed = rational_times_scalar(resummed, f)
        total = total + resummed
    return total


@dataclass
class CaseInputs:
    """q-dependent classes entering the genus-1 cases."""

    xbar: Dict[int, LaurentQ]
    y: Dict[int, RationalQ]
    y2L: RationalQ


def assemble_F1M(
    M: int,
    backend: CorrelatorBackend,
    tau: TauVector,
    inputs: CaseInputs,
    max_resum_terms: int = DEFAULT_MAX_RESUM_TERMS,
) -> RationalQ:
    """
    F_{1,M}(x) for M = 2, 3, 4, 6.

        M = 2: 1/24 <<y_2^L(1/x)/(1 - x Lbar), y_2(1/x), y_2(1/x), y_2(1/x)>>_{1,4_1}
        M = 3: 1/6  <<y_3(1/x)/(1 - x Lbar), xbar_1(1/x), xbar_1(1/x)>>_{1,3_1}
        M = 4: 1/4  <<y_4(1/x)/(1 - x Lbar), xbar_1(1/x), xbar_2(x^-2)>>_{1,2_1+1_2}
        M = 6: 1/6  <<y_6(1/x)/(1 - x Lbar), xbar_2(x^-2), xbar_3(x^-3)>>_{1,1_1+1_2+1_3}

    Raises:
        ValueError: For other M
        MissingEntryError: For genus-1 keys absent from the table
        ResummationError: If the Lbar series does not close
    """
    if M not in CASE_PREFACTORS:
        raise ValueError(f"M must be one of {CASES}, got: {M}")

    def xbar(r: int) -> Tuple[int, RationalQ]:
        return r, subst_inverse_power(inputs.xbar[r], r)

    if M == 2:
        head = subst_inverse_power(inputs.y2L, 1)
        y2 = (1, subst_inverse_power(inputs.y[2], 1))
        others = [y2, y2, y2]
    elif M == 3:
        head = subst_inverse_power(inputs.y[3], 1)
        others = [xbar(1), xbar(1)]
    elif M == 4:
        head = subst_inverse_power(inputs.y[4], 1)
        others = [xbar(1), xbar(2)]
    else:
        head = subst_inverse_power(inputs.y[6], 1)
        others = [xbar(2), xbar(3)]
    value = genus_one_geometric(backend, tau, head, others, max_resum_terms)
    logger.debug("F_1,%d assembled with poles %s", M, [(str(a), m) for a, m in value.poles])
    return value.scale(CASE_PREFACTORS[M])


def _residue(f: RationalQ, at: Union[str, CycloRational]) -> Series:
    return residue_form(f, at).components[0]


@dataclass
class CaseResidues:
    """Residues of F_{1,M}(x) dx/x at 0, infinity and the case roots."""

    M: int
    at_zero: Series
    at_infinity: Series
    at_roots: Dict[str, Series]

    @property
    def boundary_term(self) -> Series:
        return self.at_zero + self.at_infinity

    def to_json(self) -> Dict[str, Any]:
        return {
            "M": self.M,
            "zero": self.at_zero.to_json(),
            "infinity": self.at_infinity.to_json(),
            "roots": {k: v.to_json() for k, v in sorted(self.at_roots.items())},
        }


def case_residues(M: int, F: RationalQ) -> CaseResidues:
    roots = {f"zeta^{k}": _residue(F, root_of_unity(k)) for k in CASE_ROOTS[M]}
    return CaseResidues(
        M=M,
        at_zero=_residue(F, as_cyclo(0)),
        at_infinity=_residue(F, INFINITY),
        at_roots=roots,
    )


def residue_sum(f: RationalQ) -> Series:
    """Sum of the residues of f dx/x over 0, infinity and every pole."""
    total = Series.zero(f.config)
    for point in residue_points(f):
        total = total + _residue(f, point)
    return total


@dataclass
class Case2ResidueIdentity:
    """
    Res_0 + Res_inf of F_{1,2} dx/x against Res_{q=-1} of the q-form.

    Under q = 1/x the form F dx/x is -Phi(q) dq/q with Phi(q) = F(1/q), and
    the two orientation signs cancel: the identity reads lhs = at_minus_one.
    finite_poles sums the q-form residues over every finite nonzero pole; it
    equals lhs for any input and only locates poles other than -1.
    """

    lhs: Series
    at_minus_one: Series
    finite_poles: Series

    @property
    def holds(self) -> bool:
        return self.lhs == self.at_minus_one

    @property
    def stray(self) -> Series:
        """Residues of the q-form at finite poles other than -1."""
        return self.finite_poles - self.at_minus_one

    def to_json(self) -> Dict[str, Any]:
        return {
            "lhs": self.lhs.to_json(),
            "at_minus_one": self.at_minus_one.to_json(),
            "finite_poles": self.finite_poles.to_json(),
            "holds": self.holds,
        }


def case2_residue_identity(F2: RationalQ) -> Case2ResidueIdentity:
    """Compare Res_0 + Res_inf of F_{1,2} dx/x with Res_{-1} of F_{1,2}(1/q) dq/q."""
    phi = subst_inverse_power(F2, 1)
    lhs = _residue(F2, as_cyclo(0)) + _residue(F2, INFINITY)
    finite = Series.zero(F2.config)
    for a, _ in phi.poles:
        finite = finite + _residue(phi, a)
    identity = Case2ResidueIdentity(lhs=lhs, at_minus_one=_residue(phi, as_cyclo(-1)), finite_poles=finite)
    if not identity.holds:
        logger.warning("case-2 residue identity fails: poles %s", [(str(a), m) for a, m in phi.poles])
    return identity


# =============================================================================
# WDVV
# =============================================================================

Poly2 = Dict[Tuple[int, int], Series]


@dataclass
class WDVVSides:
    """Both sides of the two-point WDVV identity times (1 - x)^P (1 - y)^P."""

    lhs: Poly2
    rhs: Poly2
    clearing_power: int

    @property
    def holds(self) -> bool:
        return _nonzero(self.lhs) == _nonzero(self.rhs)


def _nonzero(poly: Poly2) -> Poly2:
    return {k: v for k, v in poly.items() if not v.is_zero()}


def _poly2_add(poly: Poly2, key: Tuple[int, int], value: Series) -> None:
    if value.is_zero():
        return
    poly[key] = poly[key] + value if key in poly else value


def _cleared(constant: Series, diffs: Sequence[Series], power: int) -> Dict[int, Series]:
    """(1 - x)^P (constant + sum_i d_i x^i / (1 - x)^(i+1)) as a polynomial."""
    out: Dict[int, Series] = {}

    def add(k: int, value: Series) -> None:
        if not value.is_zero():
            out[k] = out[k] + value if k in out else value

    for a in range(power + 1):
        add(a, constant * (binomial(power, a) * (-1) ** a))
    for i, d in enumerate(diffs):
        m = power - i - 1
        for a in range(m + 1):
            add(i + a, d * (binomial(m, a) * (-1) ** a))
    return out


def wdvv_sides(
    backend: CorrelatorBackend,
    phi: KVector,
    psi: KVector,
    tau: TauVector,
    max_resum_terms: int = DEFAULT_MAX_RESUM_TERMS,
) -> WDVVSides:
    """
    (phi, psi) + (1 - xy) <<phi/(1 - xL), psi/(1 - yL)>>_{0,2}
    against sum_{a,b} S_a(x) G^{ab} S'_b(y), denominators cleared.

    The two geometric slots are resummed one at a time.
    """
    basis, config = tau.basis, tau.config
    G = compute_G(backend, tau, 1)
    phis = _basis_vectors(basis, config)

    def two_point(a: int, b: int) -> Series:
        first = Insertion(1, LaurentQ.monomial(a, phi))
        second = Insertion(1, LaurentQ.monomial(b, psi))
        return backend.double_bracket(0, [first, second], tau)

    def inner(a: int) -> LaurentQ:
        diffs = stabilized_differences(lambda b: KVector.scalar(two_point(a, b)), max_resum_terms)
        return LaurentQ.scalar(config, {j: d.components[0] for j, d in enumerate(diffs)})

    outer = stabilized_differences(inner, max_resum_terms)

    def one_slot(vector: KVector, alpha: int) -> List[Series]:
        def sample(k: int) -> KVector:
            head = Insertion(1, LaurentQ.monomial(k, vector))
            return KVector.scalar(backend.double_bracket(0, [head, Insertion.constant(1, phis[alpha])], tau))

        return [d.components[0] for d in stabilized_differences(sample, max_resum_terms)]

    u = [one_slot(phi, a) for a in range(basis.rank)]
    v = [one_slot(psi, b) for b in range(basis.rank)]
    inner_width = max((e.max_exp + 1 for e in outer if not e.is_zero()), default=1)
    power = 1 + max([len(outer), inner_width] + [len(d) for d in u + v])

    lhs: Poly2 = {}
    x_const = _cleared(Series.one(config), [], power)
    pairing = phi.pair(psi)
    for a, ca in x_const.items():
        for b, cb in x_const.items():
            _poly2_add(lhs, (a, b), pairing * ca * cb)
    for i, row in enumerate(outer):
        for j, e in row.items():
            value = e.components[0]
            xs = _cleared(Series.zero(config), [Series.zero(config)] * i + [value], power)
            ys = _cleared(Series.zero(config), [Series.zero(config)] * j + [Series.one(config)], power)
            for a, ca in xs.items():
                for b, cb in ys.items():
                    _poly2_add(lhs, (a, b), ca * cb)
                    _poly2_add(lhs, (a + 1, b + 1), -(ca * cb))

    rhs: Poly2 = {}
    for a in range(basis.rank):
        left = _cleared(phi.pair(phis[a]), u[a], power)
        for b in range(basis.rank):
            g = G.inverse[a][b]
            if g.is_zero():
                continue
            right = _cleared(psi.pair(phis[b]), v[b], power)
            for i, ci in left.items():
                for j, cj in right.items():
                    _poly2_add(rhs, (i, j), ci * g * cj)
    return WDVVSides(lhs=lhs, rhs=rhs, clearing_power=power)


# =============================================================================
# GENUS-1 RECONSTRUCTION
# =============================================================================


@dataclass
class ReconstructionInput:
    """Inputs t_r(q) with coefficients in the maximal ideal, plus toggles."""

    t: Dict[int, LaurentQ]
    basis: Basis
    config: SeriesRingConfig
    backend: CorrelatorBackend
    y_sign: str = "-"
    a_insertion: str = "level"
    max_resum_terms: int = DEFAULT_MAX_RESUM_TERMS

    def __post_init__(self) -> None:
        validate_toggles(self.y_sign, self.a_insertion, self.max_resum_terms)
        for r, tr in self.t.items():
            if not isinstance(r, int) or r < 1:
                raise ValueError(f"level must be a positive integer, got: {r}")
            for k, coeff in tr.items():
                if coeff.order() < 1:
                    raise ValueError(f"t_{r} coefficient of q^{k} must lie in the maximal ideal")


@dataclass
class F1Report:
    """All stages of the reconstruction and the assembled F_1(t)."""

    tau: TauResult
    tbar: Dict[int, LaurentQ]
    f1_tau: Series
    logdet: Series
    cases: Dict[int, CaseResidues]
    case2_identity: Case2ResidueIdentity
    case2_jets: Case2Jets
    total: Series
    toggles: Dict[str, Any] = field(default_factory=dict)
    table_checksums: List[str] = field(default_factory=list)

    @property
    def tbar_residual_orders(self) -> Dict[int, Union[int, float]]:
        return {r: tb.eval_at(1).order() for r, tb in self.tbar.items()}

    def to_json(self) -> Dict[str, Any]:
        return {
            "toggles": self.toggles,
            "table_checksums": self.table_checksums,
            "tau": self.tau.to_json(),
            "tbar": {str(r): tb.to_json() for r, tb in sorted(self.tbar.items())},
            "tbar_residual_orders": {
                str(r): _order_json(o) for r, o in sorted(self.tbar_residual_orders.items())
            },
            "F1_tau": self.f1_tau.to_json(),
            "logdet": self.logdet.to_json(),
            "residues": {str(M): c.to_json() for M, c in sorted(self.cases.items())},
            "case2_identity": self.case2_identity.to_json(),
            "case2_jets": self.case2_jets.to_json(),
            "total": self.total.to_json(),
        }


def reconstruct_f1(inp: ReconstructionInput) -> F1Report:
    """
    F_1(t) = F_1(tau) + (1/24) log det (I - A_1)^-1
             + sum_{M = 2,3,4,6} (Res_0 + Res_inf) F_{1,M}(x) dx/x.

    Raises:
        ConvergenceError: If tau or tbar fail their fixed-point checks
        MissingEntryError: For table entries the run needs
        ResummationError: If a geometric slot does not close
    """
    backend, basis, config = inp.backend, inp.basis, inp.config
    logger.info("reconstruction: N=%d, levels %s", config.truncation_order, sorted(inp.t))
    tau_result = compute_tau(backend, inp.t, basis, config)
    tau = tau_result.tau
    tbar = compute_tbar(backend, inp.t, tau, inp.max_resum_terms)
    logger.info("tau fixed after %d iterations", tau_result.iterations)

    G1 = compute_G(backend, tau, 1)
    jacobians: Dict[int, Matrix] = {}
    for r in RECONSTRUCTION_LEVELS:
        _, jacobians[r] = compute_A_and_jacobian(backend, r, tau, tbar, inp.a_insertion)
    shifts = {r: jacobian_shift(J, basis, config) for r, J in jacobians.items()}

    y = {r: compute_y(backend, r, tau, tbar, shifts[r], G1, inp.y_sign) for r in CASES}
    y2L = compute_y2L(backend, tau, tbar, G1, inp.y_sign)
    jets = case2_jets(backend, tau, tbar, shifts[2], G1, y[2], y2L, inp.y_sign)
    v = LaurentQ.one_minus_q(basis, config)
    inputs = CaseInputs(xbar={r: v + tb for r, tb in tbar.items()}, y=y, y2L=y2L)

    cases: Dict[int, CaseResidues] = {}
    F2: Optional[RationalQ] = None
    for M in CASES:
        F = assemble_F1M(M, backend, tau, inputs, inp.max_resum_terms)
        if M == 2:
            F2 = F
        cases[M] = case_residues(M, F)
    logger.info("genus-1 cases assembled")

    f1_tau = no_descendant_potential(backend, tau)
    logdet = mat_det(jacobians[1]).log_unit() * LOGDET_PREFACTOR
    total = f1_tau + logdet
    for c in cases.values():
        total = total + c.boundary_term

    checksums = [backend.table.checksum()] if backend.table is not None else []
    return F1Report(
        tau=tau_result,
        tbar=tbar,
        f1_tau=f1_tau,
        logdet=logdet,
        cases=cases,
        case2_identity=case2_residue_identity(F2),  # type: ignore[arg-type]
        case2_jets=jets,
        total=total,
        toggles={
            "y_sign": inp.y_sign,
            "a_insertion": inp.a_insertion,
            "cycle_weight_in_brackets": backend.cycle_weight_in_brackets,
            "truncation_order": config.truncation_order,
            "max_resum_terms": inp.max_resum_terms,
        },
        table_checksums=checksums,
    )
