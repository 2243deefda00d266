"""
Exact arithmetic tests: Q(zeta_12) and truncated power series.

Field identities are checked with hypothesis; series operations are
compared against sympy expansions.
"""

from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from qkrec.errors import ConfigMismatchError, NonUnitError
from qkrec.ring import (
    IMAG,
    OMEGA,
    ONE,
    ZERO,
    ZETA,
    CycloRational,
    Series,
    SeriesRingConfig,
    root_of_unity,
)

fractions = st.fractions(min_value=-5, max_value=5, max_denominator=7)
cyclos = st.lists(fractions, min_size=4, max_size=4).map(CycloRational)
nonzero_cyclos = cyclos.filter(lambda c: not c.is_zero())


def ring(order: int = 2, variables=("eps",), novikov: bool = False) -> SeriesRingConfig:
    return SeriesRingConfig(variables=variables, novikov_enabled=novikov, truncation_order=order)


class TestCycloRational:
    """Tests for the cyclotomic field."""

    def test_minimal_relation(self):
        """Verify z^4 = z^2 - 1 and z^12 = 1."""
        assert ZETA**4 == ZETA**2 - 1
        assert ZETA**12 == ONE
        assert ZETA**6 == -1

    def test_named_roots(self):
        """Verify i^2 = -1 and omega is a primitive cube root of unity."""
        assert IMAG * IMAG == -1
        assert OMEGA**3 == 1
        assert OMEGA * OMEGA + OMEGA + 1 == ZERO

    def test_root_of_unity_wraps(self):
        """Verify root_of_unity is periodic mod 12."""
        assert root_of_unity(13) == ZETA
        assert root_of_unity(-1) == ZETA**11

    @given(a=cyclos, b=cyclos, c=cyclos)
    @settings(max_examples=40)
    def test_ring_axioms(self, a, b, c):
        """Verify associativity, commutativity and distributivity."""
        assert (a * b) * c == a * (b * c)
        assert a * b == b * a
        assert a * (b + c) == a * b + a * c

    @given(a=nonzero_cyclos)
    @settings(max_examples=40)
    def test_inverse(self, a):
        """Verify a * a^-1 = 1 for nonzero a."""
        assert a * a.inverse() == ONE
        assert (ONE / a) * a == ONE

    @given(a=nonzero_cyclos)
    @settings(max_examples=30)
    def test_norm_is_multiplicative_and_nonzero(self, a):
        """Verify the norm of a nonzero element is a nonzero rational."""
        assert a.norm() != 0
        assert (a * a).norm() == a.norm() ** 2

    def test_inverse_of_zero(self):
        """Verify inverting zero raises ZeroDivisionError."""
        with pytest.raises(ZeroDivisionError):
            ZERO.inverse()

    def test_conjugate_requires_unit_exponent(self):
        """Verify Galois exponents must be coprime to 12."""
        with pytest.raises(ValueError) as exc_info:
            ZETA.conjugate(2)
        assert "coprime" in str(exc_info.value)

    def test_conjugate_maps_zeta(self):
        """Verify z -> z^5 sends z to z^5."""
        assert ZETA.conjugate(5) == ZETA**5

    def test_json_forms(self):
        """Verify rationals serialize as strings and irrationals as coordinates."""
        assert CycloRational.from_rational(Fraction(3, 4)).to_json() == "3/4"
        assert ZETA.to_json() == ["0", "1", "0", "0"]
        assert CycloRational.from_json(["0", "1", "0", "0"]) == ZETA
        assert CycloRational.from_json("-2/3") == Fraction(-2, 3)

    def test_json_rejects_floats(self):
        """Verify float values are refused."""
        with pytest.raises(ValueError):
            CycloRational.from_json(0.5)
        with pytest.raises(ValueError):
            CycloRational.from_json([0.5, 0, 0, 0])

    def test_rational_value(self):
        """Verify rational_value refuses irrational elements."""
        assert CycloRational.from_rational(7).rational_value() == 7
        with pytest.raises(ValueError):
            ZETA.rational_value()


class TestSeriesRingConfig:
    """Tests for ring configuration validation."""

    def test_rejects_bad_order(self):
        """Verify truncation orders below 1 are refused."""
        with pytest.raises(ValueError) as exc_info:
            ring(order=0)
        assert "truncation_order" in str(exc_info.value)

    def test_rejects_reserved_name(self):
        """Verify Q is reserved for the Novikov variable."""
        with pytest.raises(ValueError):
            ring(variables=("Q",))

    def test_rejects_duplicates(self):
        """Verify duplicate variable names are refused."""
        with pytest.raises(ValueError):
            ring(variables=("eps", "eps"))

    def test_extend(self):
        """Verify extend appends one variable."""
        assert ring().extend("delta").variables == ("eps", "delta")


class TestSeries:
    """Tests for truncated power series."""

    def test_geometric_inverse(self):
        """Verify (1 - eps)^-1 = 1 + eps + eps^2 at order 2."""
        config = ring(2)
        eps = Series.variable(config, "eps")
        assert (1 - eps).invert() == 1 + eps + eps * eps

    def test_truncation_drops_high_terms(self):
        """Verify products drop terms above the truncation order."""
        config = ring(2)
        eps = Series.variable(config, "eps")
        assert (eps**3).is_zero()
        assert (eps * eps).order() == 2

    def test_invert_non_unit(self):
        """Verify inverting a series without constant term raises NonUnitError."""
        eps = Series.variable(ring(), "eps")
        with pytest.raises(NonUnitError):
            eps.invert()

    def test_log_requires_unit_constant(self):
        """Verify log_unit needs constant term 1."""
        config = ring()
        with pytest.raises(NonUnitError):
            Series.constant(config, 2).log_unit()

    def test_exp_requires_ideal(self):
        """Verify exp refuses a nonzero constant term."""
        with pytest.raises(ValueError):
            Series.one(ring()).exp()

    def test_config_mismatch(self):
        """Verify series over different rings cannot be combined."""
        a = Series.variable(ring(2), "eps")
        b = Series.variable(ring(3), "eps")
        with pytest.raises(ConfigMismatchError):
            a + b

    def test_zero_order_is_infinite(self):
        """Verify the zero series has order infinity."""
        assert Series.zero(ring()).order() == float("inf")

    @given(
        coeffs=st.lists(fractions, min_size=3, max_size=3),
        constant=fractions.filter(lambda x: x != 0),
    )
    @settings(max_examples=25, deadline=None)
    def test_invert_matches_sympy(self, coeffs, constant):
        """Verify the truncated inverse against sympy's series expansion."""
        order = 3
        config = ring(order)
        eps = Series.variable(config, "eps")
        a = Series.constant(config, constant)
        for k, c in enumerate(coeffs, start=1):
            a = a + eps**k * c
        x = sympy.Symbol("x")
        expr = sympy.Rational(constant.numerator, constant.denominator) + sum(
            sympy.Rational(c.numerator, c.denominator) * x**k for k, c in enumerate(coeffs, start=1)
        )
        expected = sympy.expand(sympy.series(1 / expr, x, 0, order + 1).removeO())
        inverse = a.invert()
        for k in range(order + 1):
            oracle = Fraction(str(expected.coeff(x, k)))
            assert inverse.coefficient({"eps": k}) == oracle

    def test_log_exp_inverse(self):
        """Verify exp(log(u)) = u and log(exp(x)) = x."""
        config = ring(4, ("eps", "delta"))
        eps = Series.variable(config, "eps")
        delta = Series.variable(config, "delta")
        x = eps * 2 + delta * eps * Fraction(1, 3) - delta**3
        assert x.exp().log_unit() == x
        u = 1 + eps - delta * Fraction(1, 2)
        assert u.log_unit().exp() == u

    def test_log_matches_sympy(self):
        """Verify log(1 + eps) against sympy."""
        config = ring(5)
        eps = Series.variable(config, "eps")
        x = sympy.Symbol("x")
        expected = sympy.expand(sympy.series(sympy.log(1 + x), x, 0, 6).removeO())
        result = (1 + eps).log_unit()
        for k in range(6):
            oracle = Fraction(str(expected.coeff(x, k)))
            assert result.coefficient({"eps": k}) == oracle

    def test_adams_scales_novikov_degree(self):
        """Verify Adams operations act on Novikov degrees only."""
        config = ring(4, novikov=True)
        eps = Series.variable(config, "eps")
        Q = Series.novikov(config)
        a = eps + Q * 3
        assert a.adams(2) == eps + Series.novikov(config, 2) * 3
        assert a.adams(1) == a
        # Q^5 exceeds the truncation order
        assert a.adams(5) == eps

    def test_adams_rejects_bad_index(self):
        """Verify Adams indices must be positive integers."""
        with pytest.raises(ValueError):
            Series.one(ring()).adams(0)

    def test_novikov_requires_switch(self):
        """Verify the Novikov variable needs novikov_enabled."""
        with pytest.raises(ValueError):
            Series.novikov(ring())

    def test_embed_and_partial_coefficient(self):
        """Verify extracting the delta-linear part after embedding."""
        base = ring(3)
        big = base.extend("delta")
        eps = Series.variable(big, "eps")
        delta = Series.variable(big, "delta")
        f = eps + delta * (1 + eps) + delta * delta
        linear = f.partial_coefficient("delta", 1, base)
        assert linear == 1 + Series.variable(base, "eps")
        assert Series.variable(base, "eps").embed(big) == eps

    def test_cyclotomic_coefficients(self):
        """Verify series arithmetic over irrational coefficients."""
        config = ring(2)
        eps = Series.variable(config, "eps")
        a = 1 - eps * ZETA
        product = a * a.invert()
        assert product == 1

    def test_json_monomials(self):
        """Verify JSON keys name the monomials."""
        config = ring(3, ("eps", "delta"), novikov=True)
        eps = Series.variable(config, "eps")
        s = eps * eps * Fraction(1, 2) + Series.novikov(config) * eps
        assert s.to_json() == {"eps^2": "1/2", "eps*Q": "1"}
