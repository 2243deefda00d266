"""
Exact coefficient arithmetic for the reconstruction engine.

This module provides:
- CycloRational: elements of the cyclotomic field Q(zeta_12) in the power
  basis {1, z, z^2, z^3}, z a primitive 12th root of unity (z^4 = z^2 - 1)
- SeriesRingConfig: the formal parameters, Novikov switch and truncation order
- Series: truncated multivariate power series over Q(zeta_12), the model of
  the local coefficient ring with maximal ideal spanned by the parameters

All values are immutable; every operation returns a new object.

Usage:
    from qkrec.ring import Series, SeriesRingConfig

    config = SeriesRingConfig(variables=("eps",), truncation_order=2)
    eps = Series.variable(config, "eps")
    (1 - eps).invert()          # 1 + eps + eps^2
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterator, Optional, Sequence, Tuple, Union

from qkrec.errors import ConfigMismatchError, NonUnitError

logger = logging.getLogger(__name__)

Rational = Union[int, Fraction]

# Novikov variable symbol used in monomial strings
NOVIKOV_SYMBOL = "Q"

# Galois group of Q(zeta_12) over Q, as exponents k in z -> z^k
GALOIS_EXPONENTS = (1, 5, 7, 11)


# =============================================================================
# CYCLOTOMIC FIELD Q(zeta_12)
# =============================================================================


def _mul_coeffs(
    a: Tuple[Fraction, ...], b: Tuple[Fraction, ...]
) -> Tuple[Fraction, Fraction, Fraction, Fraction]:
    prod = [Fraction(0)] * 7
    for i, x in enumerate(a):
        if not x:
            continue
        for j, y in enumerate(b):
            if y:
                prod[i + j] += x * y
    # z^k = z^(k-2) - z^(k-4) for k >= 4
    for k in range(6, 3, -1):
        c = prod[k]
        if c:
            prod[k - 2] += c
            prod[k - 4] -= c
    return prod[0], prod[1], prod[2], prod[3]


class CycloRational:
    """
    Exact element of Q(zeta_12).

    Coordinates are stored as Fractions in the basis {1, z, z^2, z^3}.
    The named roots of unity are i = z^3 and omega = z^4 = z^2 - 1.
    """

    __slots__ = ("_coeffs",)

    def __init__(self, coeffs: Sequence[Rational] = (0, 0, 0, 0)):
        if len(coeffs) != 4:
            raise ValueError(f"CycloRational needs 4 coordinates, got: {len(coeffs)}")
        self._coeffs: Tuple[Fraction, ...] = tuple(Fraction(c) for c in coeffs)

    @classmethod
    def _raw(cls, coeffs: Tuple[Fraction, ...]) -> "CycloRational":
        obj = cls.__new__(cls)
        obj._coeffs = coeffs
        return obj

    @classmethod
    def from_rational(cls, value: Rational) -> "CycloRational":
        return cls._raw((Fraction(value), Fraction(0), Fraction(0), Fraction(0)))

    @property
    def coeffs(self) -> Tuple[Fraction, ...]:
        return self._coeffs

    def is_zero(self) -> bool:
        return not any(self._coeffs)

    def is_one(self) -> bool:
        return self._coeffs[0] == 1 and not any(self._coeffs[1:])

    def is_rational(self) -> bool:
        return not any(self._coeffs[1:])

    def rational_value(self) -> Fraction:
        """
        Return the value as a Fraction.

        Raises:
            ValueError: If the element is not rational
        """
        if not self.is_rational():
            raise ValueError(f"{self} is not a rational number")
        return self._coeffs[0]

    def sort_key(self) -> Tuple[Fraction, ...]:
        return self._coeffs

    # ------------------------------------------------------------------
    # Field operations
    # ------------------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        other_c = _coerce(other)
        if other_c is None:
            return NotImplemented
        return self._coeffs == other_c._coeffs

    def __hash__(self) -> int:
        if self.is_rational():
            return hash(self._coeffs[0])
        return hash(self._coeffs)

    def __add__(self, other: object) -> "CycloRational":
        other_c = _coerce(other)
        if other_c is None:
            return NotImplemented
        return CycloRational._raw(tuple(x + y for x, y in zip(self._coeffs, other_c._coeffs)))

    __radd__ = __add__

    def __neg__(self) -> "CycloRational":
        return CycloRational._raw(tuple(-x for x in self._coeffs))

    def __sub__(self, other: object) -> "CycloRational":
        other_c = _coerce(other)
        if other_c is None:
            return NotImplemented
        return CycloRational._raw(tuple(x - y for x, y in zip(self._coeffs, other_c._coeffs)))

    def __rsub__(self, other: object) -> "CycloRational":
        other_c = _coerce(other)
        if other_c is None:
            return NotImplemented
        return other_c - self

    def __mul__(self, other: object) -> "CycloRational":
        if isinstance(other, (int, Fraction)):
            return CycloRational._raw(tuple(x * other for x in self._coeffs))
        if not isinstance(other, CycloRational):
            return NotImplemented
        return CycloRational._raw(_mul_coeffs(self._coeffs, other._coeffs))

    __rmul__ = __mul__

    def conjugate(self, k: int) -> "CycloRational":
        """Apply the Galois automorphism z -> z^k (k coprime to 12)."""
        if math.gcd(k, 12) != 1:
            raise ValueError(f"Galois exponent must be coprime to 12, got: {k}")
        total = [Fraction(0)] * 4
        for j, c in enumerate(self._coeffs):
            if c:
                power = _ZETA_POWERS[(j * k) % 12]._coeffs
                for idx in range(4):
                    total[idx] += c * power[idx]
        return CycloRational._raw(tuple(total))

    def norm(self) -> Fraction:
        """Field norm down to Q: the product of all Galois conjugates."""
        prod = self
        for k in GALOIS_EXPONENTS[1:]:
            prod = prod * self.conjugate(k)
        return prod.rational_value()

    def inverse(self) -> "CycloRational":
        """
        Multiplicative inverse via the product of the non-trivial conjugates.

        Raises:
            ZeroDivisionError: If the element is zero
        """
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero in Q(zeta_12)")
        if self.is_rational():
            return CycloRational.from_rational(1 / self._coeffs[0])
        cofactor = self.conjugate(5) * self.conjugate(7) * self.conjugate(11)
        norm = (self * cofactor).rational_value()
        return cofactor * (1 / norm)

    def __truediv__(self, other: object) -> "CycloRational":
        other_c = _coerce(other)
        if other_c is None:
            return NotImplemented
        return self * other_c.inverse()

    def __rtruediv__(self, other: object) -> "CycloRational":
        other_c = _coerce(other)
        if other_c is None:
            return NotImplemented
        return other_c * self.inverse()

    def __pow__(self, exponent: int) -> "CycloRational":
        if exponent < 0:
            return self.inverse() ** (-exponent)
        result = ONE
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            base = base * base
            exponent >>= 1
        return result

    # ------------------------------------------------------------------
    # Text and JSON forms
    # ------------------------------------------------------------------

    def to_json(self) -> Union[str, list]:
        """Exact JSON form: "p/q" for rationals, otherwise four coordinate strings."""
        if self.is_rational():
            return str(self._coeffs[0])
        return [str(c) for c in self._coeffs]

    @classmethod
    def from_json(cls, data: Union[str, int, list]) -> "CycloRational":
        """
        Parse the JSON form written by to_json().

        Raises:
            ValueError: If the value is a float or malformed
        """
        if isinstance(data, bool) or isinstance(data, float):
            raise ValueError(f"exact value expected, got: {data!r}")
        if isinstance(data, int):
            return cls.from_rational(data)
        if isinstance(data, str):
            return cls.from_rational(Fraction(data.strip()))
        if isinstance(data, (list, tuple)):
            if len(data) != 4 or any(isinstance(c, float) for c in data):
                raise ValueError(f"cyclotomic value needs 4 exact coordinates, got: {data!r}")
            return cls([Fraction(str(c).strip()) for c in data])
        raise ValueError(f"unsupported value: {data!r}")

    def __str__(self) -> str:
        if self.is_rational():
            return str(self._coeffs[0])
        parts = []
        for j, c in enumerate(self._coeffs):
            if not c:
                continue
            base = "" if j == 0 else ("z" if j == 1 else f"z^{j}")
            if not base:
                parts.append(str(c))
            elif c == 1:
                parts.append(base)
            elif c == -1:
                parts.append(f"-{base}")
            else:
                parts.append(f"{c}*{base}")
        return " + ".join(parts).replace("+ -", "- ")

    def __repr__(self) -> str:
        return f"CycloRational({[str(c) for c in self._coeffs]})"


def _coerce(value: object) -> Optional[CycloRational]:
    if isinstance(value, CycloRational):
        return value
    if isinstance(value, (int, Fraction)) and not isinstance(value, bool):
        return CycloRational.from_rational(value)
    return None


def as_cyclo(value: Union[Rational, CycloRational]) -> CycloRational:
    """
    Coerce an int, Fraction or CycloRational to CycloRational.

    Raises:
        TypeError: For any other type (floats included)
    """
    result = _coerce(value)
    if result is None:
        raise TypeError(f"exact scalar expected, got: {type(value).__name__}")
    return result


ZERO = CycloRational.from_rational(0)
ONE = CycloRational.from_rational(1)
ZETA = CycloRational((0, 1, 0, 0))

_ZETA_POWERS = [ONE]
for _ in range(11):
    _ZETA_POWERS.append(_ZETA_POWERS[-1] * ZETA)

IMAG = _ZETA_POWERS[3]
OMEGA = _ZETA_POWERS[4]


def root_of_unity(k: int) -> CycloRational:
    """Return z^k, z = exp(2*pi*i/12)."""
    return _ZETA_POWERS[k % 12]


def cyclo_mul(a: CycloRational, b: CycloRational) -> CycloRational:
    """Product in Q(zeta_12), reduced by z^4 = z^2 - 1."""
    return a * b


# =============================================================================
# TRUNCATED POWER SERIES
# =============================================================================


def validate_ring_params(variables: Sequence[str], truncation_order: int) -> None:
    """
    Validate series ring parameters.

    Raises:
        ValueError: If any parameter is invalid
    """
    if not isinstance(truncation_order, int) or truncation_order < 1:
        raise ValueError(f"truncation_order must be at least 1, got: {truncation_order}")
    for name in variables:
        if not isinstance(name, str) or not name.isidentifier():
            raise ValueError(f"variable names must be identifiers, got: {name!r}")
        if name == NOVIKOV_SYMBOL:
            raise ValueError(f"'{NOVIKOV_SYMBOL}' is reserved for the Novikov variable")
    if len(set(variables)) != len(variables):
        raise ValueError(f"variable names must be unique, got: {list(variables)}")


@dataclass(frozen=True)
class SeriesRingConfig:
    """
    Shape of a truncated series ring.

    Every formal parameter and the Novikov variable has filtration weight 1;
    computations are carried out modulo terms of total weight above
    truncation_order.
    """

    variables: Tuple[str, ...] = ()
    novikov_enabled: bool = False
    truncation_order: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "variables", tuple(self.variables))
        validate_ring_params(self.variables, self.truncation_order)

    @property
    def nvars(self) -> int:
        return len(self.variables)

    @property
    def zero_key(self) -> Tuple[int, ...]:
        return (0,) * (len(self.variables) + 1)

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise KeyError(f"unknown variable: {name}") from None

    def extend(self, name: str) -> "SeriesRingConfig":
        """Return a config with one extra formal parameter appended."""
        return SeriesRingConfig(
            variables=self.variables + (name,),
            novikov_enabled=self.novikov_enabled,
            truncation_order=self.truncation_order,
        )


Key = Tuple[int, ...]


class Series:
    """
    Truncated multivariate power series over Q(zeta_12).

    Terms are stored sparsely as {exponent key: CycloRational}; the key holds
    one exponent per variable followed by the Novikov degree. Zero
    coefficients and terms above the truncation order are never stored, so
    equality is equality of term maps.
    """

    __slots__ = ("_config", "_terms")

    def __init__(
        self,
        config: SeriesRingConfig,
        terms: Optional[Dict[Key, Union[Rational, CycloRational]]] = None,
    ):
        self._config = config
        clean: Dict[Key, CycloRational] = {}
        if terms:
            width = config.nvars + 1
            limit = config.truncation_order
            for key, value in terms.items():
                key = tuple(key)
                if len(key) != width or any(e < 0 for e in key):
                    raise ValueError(f"invalid exponent key {key} for {config.variables}")
                if key[-1] and not config.novikov_enabled:
                    raise ValueError("Novikov degree given but novikov_enabled is off")
                if sum(key) > limit:
                    continue
                coeff = as_cyclo(value)
                if not coeff.is_zero():
                    clean[key] = clean[key] + coeff if key in clean else coeff
        self._terms = {k: v for k, v in clean.items() if not v.is_zero()}

    @classmethod
    def _from_clean(cls, config: SeriesRingConfig, terms: Dict[Key, CycloRational]) -> "Series":
        obj = cls.__new__(cls)
        obj._config = config
        obj._terms = terms
        return obj

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def zero(cls, config: SeriesRingConfig) -> "Series":
        return cls._from_clean(config, {})

    @classmethod
    def constant(cls, config: SeriesRingConfig, value: Union[Rational, CycloRational]) -> "Series":
        return cls(config, {config.zero_key: value})

    @classmethod
    def one(cls, config: SeriesRingConfig) -> "Series":
        return cls.constant(config, 1)

    @classmethod
    def variable(cls, config: SeriesRingConfig, name: str) -> "Series":
        key = [0] * (config.nvars + 1)
        key[config.index(name)] = 1
        return cls(config, {tuple(key): 1})

    @classmethod
    def novikov(cls, config: SeriesRingConfig, degree: int = 1) -> "Series":
        if not config.novikov_enabled:
            raise ValueError("Novikov variable requested but novikov_enabled is off")
        key = [0] * config.nvars + [degree]
        return cls(config, {tuple(key): 1})

    # ------------------------------------------------------------------
    # Accessors
    # ------------------------------------------------------------------

    @property
    def config(self) -> SeriesRingConfig:
        return self._config

    def items(self) -> Iterator[Tuple[Key, CycloRational]]:
        """Terms in sorted key order."""
        for key in sorted(self._terms):
            yield key, self._terms[key]

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def constant_term(self) -> CycloRational:
        return self._terms.get(self._config.zero_key, ZERO)

    def coefficient(self, exponents: Optional[Dict[str, int]] = None, degree: int = 0) -> CycloRational:
        """Coefficient of a monomial given as {variable: power} plus Novikov degree."""
        key = [0] * (self._config.nvars + 1)
        for name, power in (exponents or {}).items():
            key[self._config.index(name)] = power
        key[-1] = degree
        return self._terms.get(tuple(key), ZERO)

    def order(self) -> Union[int, float]:
        """Smallest total degree of a stored term; math.inf for zero."""
        if not self._terms:
            return math.inf
        return min(sum(key) for key in self._terms)

    # ------------------------------------------------------------------
    # Ring operations
    # ------------------------------------------------------------------

    def _check(self, other: "Series") -> None:
        if other._config != self._config:
            raise ConfigMismatchError(
                f"series over {self._config} combined with series over {other._config}"
            )

    def _lift(self, other: object) -> Optional["Series"]:
        if isinstance(other, Series):
            self._check(other)
            return other
        scalar = _coerce(other)
        if scalar is None:
            return None
        return Series.constant(self._config, scalar)

    def __add__(self, other: object) -> "Series":
        rhs = self._lift(other)
        if rhs is None:
            return NotImplemented
        terms = dict(self._terms)
        for key, value in rhs._terms.items():
            total = terms[key] + value if key in terms else value
            if total.is_zero():
                terms.pop(key, None)
            else:
                terms[key] = total
        return Series._from_clean(self._config, terms)

    __radd__ = __add__

    def __neg__(self) -> "Series":
        return Series._from_clean(self._config, {k: -v for k, v in self._terms.items()})

    def __sub__(self, other: object) -> "Series":
        rhs = self._lift(other)
        if rhs is None:
            return NotImplemented
        return self + (-rhs)

    def __rsub__(self, other: object) -> "Series":
        lhs = self._lift(other)
        if lhs is None:
            return NotImplemented
        return lhs - self

    def __mul__(self, other: object) -> "Series":
        if isinstance(other, Series):
            self._check(other)
            return _series_product(self, other)
        scalar = _coerce(other)
        if scalar is None:
            return NotImplemented
        if scalar.is_zero():
            return Series.zero(self._config)
        return Series._from_clean(self._config, {k: v * scalar for k, v in self._terms.items()})

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "Series":
        if exponent < 0:
            return self.invert() ** (-exponent)
        result = Series.one(self._config)
        for _ in range(exponent):
            result = result * self
            if result.is_zero():
                break
        return result

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Series):
            return self._config == other._config and self._terms == other._terms
        scalar = _coerce(other)
        if scalar is None:
            return NotImplemented
        return self == Series.constant(self._config, scalar)

    def __hash__(self) -> int:
        return hash((self._config, frozenset(self._terms.items())))

    def truncate(self, order: int) -> "Series":
        """Drop terms of total degree above order."""
        return Series._from_clean(
            self._config, {k: v for k, v in self._terms.items() if sum(k) <= order}
        )

    def invert(self) -> "Series":
        """
        Multiplicative inverse by geometric expansion of the maximal-ideal part.

        Raises:
            NonUnitError: If the constant term is zero
        """
        c = self.constant_term()
        if c.is_zero():
            raise NonUnitError(f"cannot invert non-unit series {self}")
        c_inv = c.inverse()
        u = self * c_inv - 1
        result = Series.one(self._config)
        power = result
        for _ in range(self._config.truncation_order):
            power = power * (-u)
            if power.is_zero():
                break
            result = result + power
        return result * c_inv

    def log_unit(self) -> "Series":
        """
        Logarithm of a series with constant term 1 (Mercator series).

        Raises:
            NonUnitError: If the constant term is not 1
        """
        if not self.constant_term().is_one():
            raise NonUnitError(f"log_unit needs constant term 1, got: {self.constant_term()}")
        x = 1 - self
        result = Series.zero(self._config)
        power = Series.one(self._config)
        for k in range(1, self._config.truncation_order + 1):
            power = power * x
            if power.is_zero():
                break
            result = result - power * Fraction(1, k)
        return result

    def exp(self) -> "Series":
        """
        Exponential of a series in the maximal ideal.

        Raises:
            ValueError: If the constant term is nonzero
        """
        if not self.constant_term().is_zero():
            raise ValueError("exp needs a series without constant term")
        result = Series.one(self._config)
        power = result
        for k in range(1, self._config.truncation_order + 1):
            power = power * self * Fraction(1, k)
            if power.is_zero():
                break
            result = result + power
        return result

    def adams(self, r: int) -> "Series":
        """Replace every Novikov degree d by r*d; formal parameters are untouched."""
        if not isinstance(r, int) or r < 1:
            raise ValueError(f"Adams index must be a positive integer, got: {r}")
        if r == 1:
            return self
        limit = self._config.truncation_order
        terms = {}
        for key, value in self._terms.items():
            new_key = key[:-1] + (key[-1] * r,)
            if sum(new_key) <= limit:
                terms[new_key] = value
        return Series._from_clean(self._config, terms)

    # ------------------------------------------------------------------
    # Changing rings
    # ------------------------------------------------------------------

    def embed(self, target: SeriesRingConfig) -> "Series":
        """Map into a ring whose variables contain this ring's variables."""
        if target.novikov_enabled != self._config.novikov_enabled:
            raise ConfigMismatchError("cannot embed across Novikov settings")
        positions = [target.index(name) for name in self._config.variables]
        terms = {}
        for key, value in self._terms.items():
            new_key = [0] * (target.nvars + 1)
            for pos, exp in zip(positions, key[:-1]):
                new_key[pos] = exp
            new_key[-1] = key[-1]
            terms[tuple(new_key)] = value
        return Series(target, terms)

    def partial_coefficient(self, name: str, power: int, target: SeriesRingConfig) -> "Series":
        """
        Coefficient of name^power, as a series over target.

        The target ring must have this ring's variables with name removed.
        """
        idx = self._config.index(name)
        expected = tuple(v for v in self._config.variables if v != name)
        if target.variables != expected:
            raise ConfigMismatchError(f"target variables {target.variables} != {expected}")
        terms = {}
        for key, value in self._terms.items():
            if key[idx] == power:
                terms[key[:idx] + key[idx + 1 :]] = value
        return Series(target, terms)

    # ------------------------------------------------------------------
    # Text and JSON forms
    # ------------------------------------------------------------------

    def monomial_string(self, key: Key) -> str:
        factors = []
        names = self._config.variables + (NOVIKOV_SYMBOL,)
        for name, exp in zip(names, key):
            if exp == 1:
                factors.append(name)
            elif exp > 1:
                factors.append(f"{name}^{exp}")
        return "*".join(factors) if factors else "1"

    def to_json(self) -> Dict[str, Union[str, list]]:
        """Exact JSON form: {monomial string: coefficient}."""
        return {self.monomial_string(k): v.to_json() for k, v in self.items()}

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for key, value in self.items():
            mono = self.monomial_string(key)
            if mono == "1":
                parts.append(f"({value})" if not value.is_rational() else str(value))
            elif value.is_one():
                parts.append(mono)
            else:
                text = str(value) if value.is_rational() else f"({value})"
                parts.append(f"{text}*{mono}")
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"Series({self})"


def _series_product(a: Series, b: Series) -> Series:
    limit = a.config.truncation_order
    out: Dict[Key, CycloRational] = {}
    b_items = [(kb, vb, sum(kb)) for kb, vb in b._terms.items()]
    for ka, va in a._terms.items():
        da = sum(ka)
        for kb, vb, db in b_items:
            if da + db > limit:
                continue
            key = tuple(x + y for x, y in zip(ka, kb))
            prod = va * vb
            out[key] = out[key] + prod if key in out else prod
    return Series._from_clean(a.config, {k: v for k, v in out.items() if not v.is_zero()})


def series_mul(a: Series, b: Series) -> Series:
    """
    Truncated product.

    Raises:
        ConfigMismatchError: If a and b live in different rings
    """
    return a * b


def series_invert(a: Series) -> Series:
    """Inverse of a unit series. Raises NonUnitError for non-units."""
    return a.invert()


def series_log_unit(a: Series) -> Series:
    """log(a) = -sum (1 - a)^k / k for a with constant term 1."""
    return a.log_unit()


def adams_novikov(r: int, a: Series) -> Series:
    """Adams operation on Novikov degrees: Q^d -> Q^(r d)."""
    return a.adams(r)


def filtration_order(a: Series) -> Union[int, float]:
    """Smallest total degree of a stored term (math.inf for the zero series)."""
    return a.order()
