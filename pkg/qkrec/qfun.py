"""
Algebra of functions of the cotangent variable q.

This module provides:
- Basis and KVector: classes of K^0(X) tensored with the coefficient ring
- LaurentQ: Laurent polynomials in q with KVector coefficients
- RationalQ: rational functions whose poles are nonzero elements of Q(zeta_12)
- The operations the reconstruction needs on them: the D operator, the
  Laurent-polynomial part [f]+, jets at roots of unity, the t2_new
  transform, the substitution q = x^(-r) and residues of f(x) dx/x

A rational function in x is represented by the same RationalQ type; scalar
valued functions use the rank-1 POINT_BASIS.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from qkrec.errors import ConfigMismatchError, PoleError
from qkrec.ring import (
    ONE,
    ZERO,
    CycloRational,
    Rational,
    Series,
    SeriesRingConfig,
    as_cyclo,
    root_of_unity,
)

logger = logging.getLogger(__name__)

Scalar = Union[Rational, CycloRational, Series]
Poly = Dict[int, CycloRational]

# Marker for the point at infinity in residue_form()
INFINITY = "inf"


# =============================================================================
# BASIS AND K-VECTORS
# =============================================================================


def rational_matrix_inverse(matrix: Sequence[Sequence[Rational]]) -> Tuple[Tuple[Fraction, ...], ...]:
    """
    Invert a square rational matrix by Gauss-Jordan elimination.

    Raises:
        ValueError: If the matrix is not square or is singular
    """
    n = len(matrix)
    if any(len(row) != n for row in matrix):
        raise ValueError("pairing matrix must be square")
    work = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if work[r][col] != 0), None)
        if pivot is None:
            raise ValueError("pairing matrix is singular")
        work[col], work[pivot] = work[pivot], work[col]
        inv = 1 / work[col][col]
        work[col] = [x * inv for x in work[col]]
        for r in range(n):
            if r != col and work[r][col] != 0:
                factor = work[r][col]
                work[r] = [x - factor * y for x, y in zip(work[r], work[col])]
    return tuple(tuple(row[n:]) for row in work)


@dataclass(frozen=True)
class Basis:
    """
    Basis phi_alpha of K^0(X) with the pairing g_ab = chi(X, phi_a (x) phi_b).

    Attributes:
        rank: Number of basis vectors
        pairing: Symmetric invertible rational matrix
        unit_index: Index of the unit class 1 = phi_unit
        dimension: Complex dimension of X (bounds jets in correlators)
    """

    rank: int
    pairing: Tuple[Tuple[Fraction, ...], ...]
    unit_index: int = 0
    dimension: int = 0
    pairing_inverse: Tuple[Tuple[Fraction, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pairing = tuple(tuple(Fraction(x) for x in row) for row in self.pairing)
        object.__setattr__(self, "pairing", pairing)
        if self.rank < 1 or len(pairing) != self.rank:
            raise ValueError(f"pairing must be {self.rank}x{self.rank}, got {len(pairing)} rows")
        for i in range(self.rank):
            for j in range(self.rank):
                if pairing[i][j] != pairing[j][i]:
                    raise ValueError(f"pairing must be symmetric, entry ({i},{j}) differs")
        if not 0 <= self.unit_index < self.rank:
            raise ValueError(f"unit_index must be in [0, {self.rank}), got: {self.unit_index}")
        if self.dimension < 0:
            raise ValueError(f"dimension must be non-negative, got: {self.dimension}")
        object.__setattr__(self, "pairing_inverse", rational_matrix_inverse(pairing))

    def to_json(self) -> dict:
        return {
            "rank": self.rank,
            "pairing": [[str(x) for x in row] for row in self.pairing],
            "dimension": self.dimension,
        }


POINT_BASIS = Basis(rank=1, pairing=((Fraction(1),),))


class KVector:
    """Element of K = K^0(X) (x) Lambda, one Series per basis vector."""

    __slots__ = ("basis", "components")

    def __init__(self, basis: Basis, components: Sequence[Series]):
        if len(components) != basis.rank:
            raise ValueError(f"expected {basis.rank} components, got: {len(components)}")
        configs = {c.config for c in components}
        if len(configs) != 1:
            raise ConfigMismatchError("KVector components live in different rings")
        self.basis = basis
        self.components: Tuple[Series, ...] = tuple(components)

    @classmethod
    def zero(cls, basis: Basis, config: SeriesRingConfig) -> "KVector":
        return cls(basis, [Series.zero(config)] * basis.rank)

    @classmethod
    def basis_vector(
        cls, basis: Basis, config: SeriesRingConfig, alpha: int, coeff: Scalar = 1
    ) -> "KVector":
        comps = [Series.zero(config)] * basis.rank
        comps[alpha] = coeff if isinstance(coeff, Series) else Series.constant(config, coeff)
        return cls(basis, comps)

    @classmethod
    def unit(cls, basis: Basis, config: SeriesRingConfig, coeff: Scalar = 1) -> "KVector":
        return cls.basis_vector(basis, config, basis.unit_index, coeff)

    @classmethod
    def scalar(cls, value: Series) -> "KVector":
        """Rank-1 vector over POINT_BASIS."""
        return cls(POINT_BASIS, [value])

    @property
    def config(self) -> SeriesRingConfig:
        return self.components[0].config

    def _check(self, other: "KVector") -> None:
        if other.basis != self.basis:
            raise ConfigMismatchError("KVectors over different bases")

    def __add__(self, other: "KVector") -> "KVector":
        self._check(other)
        return KVector(self.basis, [a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "KVector") -> "KVector":
        self._check(other)
        return KVector(self.basis, [a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> "KVector":
        return KVector(self.basis, [-a for a in self.components])

    def __mul__(self, scalar: Scalar) -> "KVector":
        return KVector(self.basis, [a * scalar for a in self.components])

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KVector):
            return NotImplemented
        return self.basis == other.basis and self.components == other.components

    def __hash__(self) -> int:
        return hash((self.basis, self.components))

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def order(self) -> Union[int, float]:
        return min(c.order() for c in self.components)

    def pair(self, other: "KVector") -> Series:
        """(self, other) = sum g_ab self^a other^b."""
        self._check(other)
        total = Series.zero(self.config)
        for a, x in enumerate(self.components):
            if x.is_zero():
                continue
            for b, y in enumerate(other.components):
                g = self.basis.pairing[a][b]
                if g and not y.is_zero():
                    total = total + x * y * g
        return total

    def truncate(self, order: int) -> "KVector":
        return KVector(self.basis, [c.truncate(order) for c in self.components])

    def embed(self, config: SeriesRingConfig) -> "KVector":
        return KVector(self.basis, [c.embed(config) for c in self.components])

    def to_json(self) -> list:
        return [c.to_json() for c in self.components]

    def __repr__(self) -> str:
        return f"KVector({', '.join(str(c) for c in self.components)})"


# =============================================================================
# SCALAR POLYNOMIAL HELPERS
# =============================================================================


def binomial(k: int, j: int) -> int:
    """Generalized binomial coefficient C(k, j) for any integer k and j >= 0."""
    if j < 0:
        return 0
    if k >= 0:
        return math.comb(k, j)
    return (-1) ** j * math.comb(j - k - 1, j)


def _poly_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for i, x in a.items():
        for j, y in b.items():
            out[i + j] = out.get(i + j, ZERO) + x * y
    return {k: v for k, v in out.items() if not v.is_zero()}


def _linear_power(a: CycloRational, m: int) -> Poly:
    """(q - a)^m as a coefficient dict."""
    return {i: binomial(m, i) * (-a) ** (m - i) for i in range(m + 1) if binomial(m, i)}


def _poles_poly(poles: Sequence[Tuple[CycloRational, int]]) -> Poly:
    result: Poly = {0: ONE}
    for a, m in poles:
        result = _poly_mul(result, _linear_power(a, m))
    return result


def _inverse_taylor(poles: Sequence[Tuple[CycloRational, int]], a: CycloRational, order: int) -> List[CycloRational]:
    """Taylor coefficients in s = q - a of prod (q - b)^(-m_b), for b != a."""
    series = [ONE] + [ZERO] * (order - 1)
    for b, m in poles:
        gap = a - b
        gap_inv = gap.inverse()
        factor = [binomial(-m, j) * gap_inv ** (m + j) for j in range(order)]
        series = [sum((series[i] * factor[n - i] for i in range(n + 1)), ZERO) for n in range(order)]
    return series


# =============================================================================
# LAURENT POLYNOMIALS
# =============================================================================


class LaurentQ:
    """Laurent polynomial in q with KVector coefficients, stored sparsely."""

    __slots__ = ("basis", "config", "_coeffs")

    def __init__(
        self,
        basis: Basis,
        config: SeriesRingConfig,
        coeffs: Optional[Dict[int, KVector]] = None,
    ):
        self.basis = basis
        self.config = config
        clean: Dict[int, KVector] = {}
        for k, v in (coeffs or {}).items():
            if v.basis != basis or v.config != config:
                raise ConfigMismatchError("LaurentQ coefficient over a different basis or ring")
            if not v.is_zero():
                clean[int(k)] = v
        self._coeffs = clean

    @classmethod
    def zero(cls, basis: Basis, config: SeriesRingConfig) -> "LaurentQ":
        return cls(basis, config)

    @classmethod
    def monomial(cls, k: int, vector: KVector) -> "LaurentQ":
        return cls(vector.basis, vector.config, {k: vector})

    @classmethod
    def constant(cls, vector: KVector) -> "LaurentQ":
        return cls.monomial(0, vector)

    @classmethod
    def from_poly(cls, poly: Poly, vector: KVector) -> "LaurentQ":
        """poly(q) * vector for a scalar coefficient dict."""
        return cls(vector.basis, vector.config, {k: vector * c for k, c in poly.items()})

    @classmethod
    def scalar(cls, config: SeriesRingConfig, coeffs: Dict[int, Series]) -> "LaurentQ":
        """Scalar Laurent polynomial over POINT_BASIS."""
        return cls(POINT_BASIS, config, {k: KVector.scalar(v) for k, v in coeffs.items()})

    @classmethod
    def one_minus_q(cls, basis: Basis, config: SeriesRingConfig) -> "LaurentQ":
        """The dilaton shift v = (1 - q) * 1."""
        unit = KVector.unit(basis, config)
        return cls(basis, config, {0: unit, 1: -unit})

    # ------------------------------------------------------------------
    # Accessors
    # ------------------------------------------------------------------

    def items(self) -> Iterator[Tuple[int, KVector]]:
        for k in sorted(self._coeffs):
            yield k, self._coeffs[k]

    def coefficient(self, k: int) -> KVector:
        return self._coeffs.get(k) or KVector.zero(self.basis, self.config)

    def is_zero(self) -> bool:
        return not self._coeffs

    @property
    def min_exp(self) -> int:
        return min(self._coeffs) if self._coeffs else 0

    @property
    def max_exp(self) -> int:
        return max(self._coeffs) if self._coeffs else 0

    def order(self) -> Union[int, float]:
        return min((v.order() for v in self._coeffs.values()), default=math.inf)

    # ------------------------------------------------------------------
    # Arithmetic
    # ------------------------------------------------------------------

    def _check(self, other: "LaurentQ") -> None:
        if other.basis != self.basis or other.config != self.config:
            raise ConfigMismatchError("LaurentQ over different bases or rings")

    def __add__(self, other: "LaurentQ") -> "LaurentQ":
        self._check(other)
        coeffs = dict(self._coeffs)
        for k, v in other._coeffs.items():
            coeffs[k] = coeffs[k] + v if k in coeffs else v
        return LaurentQ(self.basis, self.config, coeffs)

    def __neg__(self) -> "LaurentQ":
        return LaurentQ(self.basis, self.config, {k: -v for k, v in self._coeffs.items()})

    def __sub__(self, other: "LaurentQ") -> "LaurentQ":
        return self + (-other)

    def scale(self, scalar: Scalar) -> "LaurentQ":
        return LaurentQ(self.basis, self.config, {k: v * scalar for k, v in self._coeffs.items()})

    def shift(self, k: int) -> "LaurentQ":
        """Multiply by q^k."""
        return LaurentQ(self.basis, self.config, {e + k: v for e, v in self._coeffs.items()})

    def mul_poly(self, poly: Poly) -> "LaurentQ":
        out: Dict[int, KVector] = {}
        for e, v in self._coeffs.items():
            for k, c in poly.items():
                term = v * c
                out[e + k] = out[e + k] + term if e + k in out else term
        return LaurentQ(self.basis, self.config, out)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LaurentQ):
            return NotImplemented
        return self.basis == other.basis and self._coeffs == other._coeffs

    def __hash__(self) -> int:
        return hash((self.basis, frozenset(self._coeffs.items())))

    def truncate(self, order: int) -> "LaurentQ":
        return LaurentQ(self.basis, self.config, {k: v.truncate(order) for k, v in self._coeffs.items()})

    def embed(self, config: SeriesRingConfig) -> "LaurentQ":
        return LaurentQ(self.basis, config, {k: v.embed(config) for k, v in self._coeffs.items()})

    # ------------------------------------------------------------------
    # Evaluation and expansion
    # ------------------------------------------------------------------

    def eval_at(self, q0: Union[Rational, CycloRational]) -> KVector:
        """
        Substitute q = q0.

        Raises:
            PoleError: If q0 = 0 and negative powers are present
        """
        q0 = as_cyclo(q0)
        total = KVector.zero(self.basis, self.config)
        if q0.is_zero():
            if self._coeffs and self.min_exp < 0:
                raise PoleError("evaluation at q = 0 of a polynomial with negative powers")
            return self.coefficient(0)
        for k, v in self._coeffs.items():
            total = total + v * q0 ** k
        return total

    def taylor_at(self, a: Union[Rational, CycloRational], order: int) -> List[KVector]:
        """
        Coefficients of s^0, ..., s^(order-1) in the expansion at q = a + s.

        Raises:
            PoleError: If a = 0 and negative powers are present
        """
        a = as_cyclo(a)
        if a.is_zero() and self._coeffs and self.min_exp < 0:
            raise PoleError("Taylor expansion at q = 0 of a polynomial with negative powers")
        result = []
        for j in range(order):
            total = KVector.zero(self.basis, self.config)
            for k, v in self._coeffs.items():
                c = binomial(k, j)
                if c and not (a.is_zero() and k != j):
                    total = total + v * (c * a ** (k - j))
            result.append(total)
        return result

    def d_operator(self) -> "LaurentQ":
        """D t(q) = (t(q) - t(1)) / (q - 1), exactly."""
        out: Dict[int, KVector] = {}
        for k, v in self._coeffs.items():
            # (q^k - 1)/(q - 1): q^0 + ... + q^(k-1) for k > 0, -(q^k + ... + q^-1) for k < 0
            if k > 0:
                span, sign = range(0, k), 1
            elif k < 0:
                span, sign = range(k, 0), -1
            else:
                continue
            term = v if sign == 1 else -v
            for e in span:
                out[e] = out[e] + term if e in out else term
        return LaurentQ(self.basis, self.config, out)

    def divide_linear(self, a: CycloRational) -> "LaurentQ":
        """
        Exact quotient by (q - a), a != 0.

        Raises:
            ValueError: If (q - a) does not divide the polynomial
        """
        if not self._coeffs:
            return self
        lo, hi = self.min_exp, self.max_exp
        coeffs = [self.coefficient(lo + i) for i in range(hi - lo + 1)]
        n = len(coeffs) - 1
        if n == 0:
            raise ValueError(f"(q - {a}) does not divide a monomial")
        quotient: List[KVector] = [None] * n  # type: ignore[list-item]
        quotient[n - 1] = coeffs[n]
        for i in range(n - 1, 0, -1):
            quotient[i - 1] = coeffs[i] + quotient[i] * a
        remainder = coeffs[0] + quotient[0] * a
        if not remainder.is_zero():
            raise ValueError(f"(q - {a}) does not divide the polynomial")
        return LaurentQ(self.basis, self.config, {lo + i: q for i, q in enumerate(quotient)})

    def to_json(self) -> Dict[str, list]:
        return {str(k): v.to_json() for k, v in self.items()}

    def __repr__(self) -> str:
        body = " + ".join(f"[{v}]q^{k}" for k, v in self.items()) or "0"
        return f"LaurentQ({body})"


def d_operator(t: LaurentQ) -> LaurentQ:
    """D t(q) = (t(q) - t(1)) / (q - 1)."""
    return t.d_operator()


def eval_at(t: LaurentQ, q0: Union[Rational, CycloRational]) -> KVector:
    """Substitute q = q0 into a Laurent polynomial."""
    return t.eval_at(q0)


# =============================================================================
# RATIONAL FUNCTIONS
# =============================================================================


def _merge_poles(poles: Sequence[Tuple[CycloRational, int]]) -> Dict[CycloRational, int]:
    merged: Dict[CycloRational, int] = {}
    for a, m in poles:
        a = as_cyclo(a)
        if a.is_zero():
            raise ValueError("pole at q = 0: carry q-powers in the numerator")
        if m < 0:
            raise ValueError(f"pole multiplicity must be non-negative, got: {m}")
        if m:
            merged[a] = merged.get(a, 0) + m
    return merged


class RationalQ:
    """
    Rational function numerator / prod (q - a)^m with a != 0.

    Stored in reduced form: no denominator factor divides the numerator, and
    poles are sorted, so equality is structural.
    """

    __slots__ = ("numerator", "poles")

    def __init__(self, numerator: LaurentQ, poles: Sequence[Tuple[CycloRational, int]] = ()):
        merged = _merge_poles(poles)
        for a in list(merged):
            while merged[a] and not numerator.is_zero() and numerator.eval_at(a).is_zero():
                numerator = numerator.divide_linear(a)
                merged[a] -= 1
        if numerator.is_zero():
            merged = {}
        self.numerator = numerator
        self.poles: Tuple[Tuple[CycloRational, int], ...] = tuple(
            sorted(((a, m) for a, m in merged.items() if m), key=lambda p: p[0].sort_key())
        )

    @classmethod
    def from_laurent(cls, laurent: LaurentQ) -> "RationalQ":
        return cls(laurent)

    @classmethod
    def zero(cls, basis: Basis, config: SeriesRingConfig) -> "RationalQ":
        return cls(LaurentQ.zero(basis, config))

    @property
    def basis(self) -> Basis:
        return self.numerator.basis

    @property
    def config(self) -> SeriesRingConfig:
        return self.numerator.config

    def is_zero(self) -> bool:
        return self.numerator.is_zero()

    def is_laurent(self) -> bool:
        return not self.poles

    def to_laurent(self) -> LaurentQ:
        """
        Return the numerator of a pole-free function.

        Raises:
            ValueError: If the function has poles
        """
        if self.poles:
            raise ValueError("rational function has poles; use laurent_part()")
        return self.numerator

    def pole_order(self, a: CycloRational) -> int:
        return dict(self.poles).get(as_cyclo(a), 0)

    def denominator(self) -> Poly:
        return _poles_poly(self.poles)

    def _over(self, poles: Dict[CycloRational, int]) -> LaurentQ:
        """Numerator rewritten over the denominator prod (q - a)^poles[a]."""
        own = dict(self.poles)
        extra = [(a, m - own.get(a, 0)) for a, m in poles.items()]
        return self.numerator.mul_poly(_poles_poly([(a, m) for a, m in extra if m]))

    def __add__(self, other: "RationalQ") -> "RationalQ":
        common = dict(self.poles)
        for a, m in other.poles:
            common[a] = max(common.get(a, 0), m)
        return RationalQ(self._over(common) + other._over(common), list(common.items()))

    def __neg__(self) -> "RationalQ":
        return RationalQ(-self.numerator, self.poles)

    def __sub__(self, other: "RationalQ") -> "RationalQ":
        return self + (-other)

    def scale(self, scalar: Scalar) -> "RationalQ":
        return RationalQ(self.numerator.scale(scalar), self.poles)

    def shift(self, k: int) -> "RationalQ":
        """Multiply by q^k."""
        return RationalQ(self.numerator.shift(k), self.poles)

    def eval_at(self, q0: Union[Rational, CycloRational]) -> KVector:
        """
        Substitute q = q0.

        Raises:
            PoleError: If q0 is a pole
        """
        q0 = as_cyclo(q0)
        if self.pole_order(q0):
            raise PoleError(f"evaluation at the pole q = {q0}")
        den = ONE
        for a, m in self.poles:
            den = den * (q0 - a) ** m
        return self.numerator.eval_at(q0) * den.inverse()

    def taylor_at(self, a: Union[Rational, CycloRational], order: int) -> List[KVector]:
        """
        Taylor coefficients in s = q - a at a regular point a.

        Raises:
            PoleError: If a is a pole
        """
        a = as_cyclo(a)
        if self.pole_order(a):
            raise PoleError(f"Taylor expansion at the pole q = {a}")
        return _taylor_of_quotient(self.numerator, self.poles, a, order)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RationalQ):
            return NotImplemented
        return self.numerator == other.numerator and self.poles == other.poles

    def __hash__(self) -> int:
        return hash((self.numerator, self.poles))

    def to_json(self) -> dict:
        return {
            "numerator": self.numerator.to_json(),
            "poles": [[a.to_json(), m] for a, m in self.poles],
        }

    def __repr__(self) -> str:
        poles = " ".join(f"(q - {a})^{m}" for a, m in self.poles)
        return f"RationalQ({self.numerator!r} / {poles or '1'})"


def _taylor_of_quotient(
    numerator: LaurentQ,
    poles: Sequence[Tuple[CycloRational, int]],
    a: CycloRational,
    order: int,
) -> List[KVector]:
    """Taylor coefficients at a of numerator / prod (q - b)^m over poles b != a."""
    num = numerator.taylor_at(a, order)
    den = _inverse_taylor([(b, m) for b, m in poles if b != a], a, order)
    out = []
    for n in range(order):
        total = KVector.zero(numerator.basis, numerator.config)
        for i in range(n + 1):
            if not den[n - i].is_zero():
                total = total + num[i] * den[n - i]
        out.append(total)
    return out


def laurent_part(f: RationalQ) -> LaurentQ:
    """
    The Laurent-polynomial part [f]+ of the partial-fraction decomposition.

    Principal parts at the nonzero poles are subtracted from the numerator and
    the remainder is divided exactly by the denominator.
    """
    if not f.poles:
        return f.numerator
    remainder = f.numerator
    for a, m in f.poles:
        others = [(b, mb) for b, mb in f.poles if b != a]
        taylor = _taylor_of_quotient(f.numerator, others, a, m)
        cofactor = _poles_poly(others)
        for j, g in enumerate(taylor):
            if g.is_zero():
                continue
            poly = _poly_mul(_linear_power(a, j), cofactor)
            remainder = remainder - LaurentQ.from_poly(poly, g)
    for a, m in f.poles:
        for _ in range(m):
            remainder = remainder.divide_linear(a)
    return remainder


@dataclass(frozen=True)
class JetAtRoot:
    """Zeroth and first Taylor coefficients in the coordinate (q/root - 1)."""

    root: CycloRational
    value: KVector
    derivative: KVector


def jet_at_root(f: Union[RationalQ, LaurentQ], root: Union[Rational, CycloRational]) -> JetAtRoot:
    """
    Jet of f at a root of unity (or any nonzero regular point).

    Raises:
        PoleError: If root is a pole of f
    """
    root = as_cyclo(root)
    if isinstance(f, LaurentQ):
        f = RationalQ(f)
    c0, c1 = f.taylor_at(root, 2)
    # s = q - root = root * (q/root - 1)
    return JetAtRoot(root=root, value=c0, derivative=c1 * root)


def expansion_at(f: RationalQ, a: Union[Rational, CycloRational], degree: int) -> RationalQ:
    """
    Expansion of f at a kept through (q - a)^degree, principal part included.

    Returns sum_{i <= m + degree} g_i (q - a)^(i - m) over (q - a)^m, where m
    is the pole order at a and g_i are the Taylor coefficients of
    f (q - a)^m. Poles of f elsewhere do not survive.
    """
    if degree < 0:
        raise ValueError(f"degree must be non-negative, got: {degree}")
    a = as_cyclo(a)
    m = f.pole_order(a)
    others = [(b, mb) for b, mb in f.poles if b != a]
    taylor = _taylor_of_quotient(f.numerator, others, a, m + degree + 1)
    numerator = LaurentQ.zero(f.basis, f.config)
    for i, g in enumerate(taylor):
        if not g.is_zero():
            numerator = numerator + LaurentQ.from_poly(_linear_power(a, i), g)
    return RationalQ(numerator, [(a, m)])


def t2_new_transform(tbar2: LaurentQ) -> RationalQ:
    """
    g(q) = -tbar2(q + 2) / (q + 1), i.e. g(q - 1) = -tbar2(q + 1) / q.

    Negative powers of q in tbar2 become poles at q = -2.
    """
    if tbar2.is_zero():
        return RationalQ(tbar2)
    shift = max(0, -tbar2.min_exp)
    out: Dict[int, KVector] = {}
    for k, v in tbar2.items():
        e = k + shift
        for i in range(e + 1):
            term = v * (-binomial(e, i) * 2 ** (e - i))
            out[i] = out[i] + term if i in out else term
    numerator = LaurentQ(tbar2.basis, tbar2.config, out)
    poles = [(as_cyclo(-1), 1)]
    if shift:
        poles.append((as_cyclo(-2), shift))
    return RationalQ(numerator, poles)


def _roots_of(target: CycloRational, r: int) -> List[CycloRational]:
    """All b in Q(zeta_12) with b^r = target, found among the 12th roots of unity."""
    if r == 1:
        return [target]
    return [root_of_unity(k) for k in range(12) if root_of_unity(k) ** r == target]


def subst_inverse_power(f: Union[RationalQ, LaurentQ], r: int) -> RationalQ:
    """
    Substitute q = x^(-r); the result is a rational function of x.

    Each factor (q - a)^(-m) becomes (-a)^(-m) x^(r m) / prod_b (x - b)^m over
    the r-th roots b of 1/a.

    Raises:
        PoleError: If some r-th root of 1/a is not in Q(zeta_12)
    """
    if not isinstance(r, int) or r < 1:
        raise ValueError(f"r must be a positive integer, got: {r}")
    if isinstance(f, LaurentQ):
        f = RationalQ(f)
    numerator = LaurentQ(f.basis, f.config, {-r * k: v for k, v in f.numerator.items()})
    poles: List[Tuple[CycloRational, int]] = []
    scale = ONE
    shift = 0
    for a, m in f.poles:
        roots = _roots_of(a.inverse(), r)
        if len(roots) != r:
            raise PoleError(f"the {r}-th roots of 1/{a} are not all in Q(zeta_12)")
        scale = scale * (-a) ** (-m)
        shift += r * m
        poles.extend((b, m) for b in roots)
    return RationalQ(numerator.shift(shift).scale(scale), poles)


def subst_power(f: Union[RationalQ, LaurentQ], r: int) -> RationalQ:
    """
    Substitute q -> q^r; each factor (q - a)^(-m) becomes prod_b (q - b)^(-m)
    over the r-th roots b of a.

    Raises:
        PoleError: If some r-th root of a is not in Q(zeta_12)
    """
    if not isinstance(r, int) or r < 1:
        raise ValueError(f"r must be a positive integer, got: {r}")
    if isinstance(f, LaurentQ):
        f = RationalQ(f)
    numerator = LaurentQ(f.basis, f.config, {r * k: v for k, v in f.numerator.items()})
    poles: List[Tuple[CycloRational, int]] = []
    for a, m in f.poles:
        roots = _roots_of(a, r)
        if len(roots) != r:
            raise PoleError(f"the {r}-th roots of {a} are not all in Q(zeta_12)")
        poles.extend((b, m) for b in roots)
    return RationalQ(numerator, poles)


def residue_form(f: Union[RationalQ, LaurentQ], at: Union[str, Rational, CycloRational]) -> KVector:
    """
    Residue of the 1-form f(x) dx/x.

    Args:
        f: Rational function of x
        at: 0, INFINITY, or a nonzero point of Q(zeta_12)

    Returns:
        KVector of residues (component series)
    """
    if isinstance(f, LaurentQ):
        f = RationalQ(f)
    zero = KVector.zero(f.basis, f.config)
    if f.is_zero():
        return zero
    num = f.numerator
    if at == INFINITY:
        total_mult = sum(m for _, m in f.poles)
        needed = num.max_exp - total_mult + 1
        if needed <= 0:
            return zero
        # f(1/w) = sum N_k w^(M - k) prod (1 - b w)^(-m)
        expansion = [ONE] + [ZERO] * (needed - 1)
        for b, m in f.poles:
            factor = [binomial(m + j - 1, j) * b ** j for j in range(needed)]
            expansion = [
                sum((expansion[i] * factor[n - i] for i in range(n + 1)), ZERO) for n in range(needed)
            ]
        total = zero
        for k, v in num.items():
            idx = k - total_mult
            if 0 <= idx < needed:
                total = total + v * expansion[idx]
        return -total
    point = as_cyclo(at)
    if point.is_zero():
        needed = max(0, -num.min_exp) + 1
        expansion = _inverse_taylor(f.poles, point, needed)
        total = zero
        for k, v in num.items():
            if k <= 0:
                total = total + v * expansion[-k]
        return total
    m = f.pole_order(point)
    if not m:
        return zero
    others = [(b, mb) for b, mb in f.poles if b != point]
    taylor = _taylor_of_quotient(num.shift(-1), others, point, m)
    return taylor[m - 1]


def residue_points(f: RationalQ) -> List[Union[str, CycloRational]]:
    """0, infinity and every pole of f."""
    return [ZERO, INFINITY] + [a for a, _ in f.poles]


# =============================================================================
# PRODUCTS WITH SCALAR FUNCTIONS
# =============================================================================


def laurent_times_scalar(f: LaurentQ, g: LaurentQ) -> LaurentQ:
    """Product of a Laurent polynomial with a scalar (POINT_BASIS) one."""
    if g.basis != POINT_BASIS:
        raise ConfigMismatchError("second factor must be scalar-valued")
    out: Dict[int, KVector] = {}
    for a, v in f.items():
        for b, s in g.items():
            term = v * s.components[0]
            out[a + b] = out[a + b] + term if a + b in out else term
    return LaurentQ(f.basis, f.config, out)


def rational_times_scalar(f: RationalQ, g: RationalQ) -> RationalQ:
    """Product of a rational function with a scalar (POINT_BASIS) one."""
    numerator = laurent_times_scalar(f.numerator, g.numerator)
    return RationalQ(numerator, list(f.poles) + list(g.poles))


def component(f: Union[RationalQ, LaurentQ], alpha: int) -> RationalQ:
    """The alpha-th coordinate of a K-valued function, as a scalar function."""
    if isinstance(f, LaurentQ):
        f = RationalQ(f)
    numerator = LaurentQ(
        POINT_BASIS, f.config, {k: KVector.scalar(v.components[alpha]) for k, v in f.numerator.items()}
    )
    return RationalQ(numerator, f.poles)
