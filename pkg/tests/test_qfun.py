"""
Tests for functions of q: Laurent polynomials, rational functions, jets
and residues.

Residues and partial fractions are compared against sympy on functions
with rational poles.
"""

from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from qkrec.errors import ConfigMismatchError, PoleError
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
from qkrec.ring import ONE, ZETA, CycloRational, Series, SeriesRingConfig, root_of_unity

CONFIG = SeriesRingConfig(variables=("eps",), truncation_order=2)
X = sympy.Symbol("x")

small = st.fractions(min_value=-4, max_value=4, max_denominator=5)
rational_poles = st.sampled_from([Fraction(2), Fraction(-1), Fraction(3), Fraction(1, 2)])


def scalar(coeffs) -> LaurentQ:
    """Scalar Laurent polynomial from {exponent: rational}."""
    return LaurentQ.scalar(CONFIG, {k: Series.constant(CONFIG, c) for k, c in coeffs.items()})


def value(v: KVector) -> CycloRational:
    return v.components[0].constant_term()


def to_sympy(f: RationalQ):
    num = sum(
        sympy.Rational(str(value(v).rational_value())) * X**k for k, v in f.numerator.items()
    )
    den = 1
    for a, m in f.poles:
        den *= (X - sympy.Rational(str(a.rational_value()))) ** m
    return num / den


def with_poles(numerator: LaurentQ, poles) -> RationalQ:
    return RationalQ(numerator, [(CycloRational.from_rational(a), m) for a, m in poles])


class TestBasis:
    """Tests for Basis validation."""

    def test_point_basis(self):
        """Verify the point target has rank 1 and pairing 1."""
        assert POINT_BASIS.rank == 1
        assert POINT_BASIS.pairing_inverse == ((Fraction(1),),)

    def test_pairing_inverse(self):
        """Verify the inverse pairing of a rank-2 basis."""
        basis = Basis(rank=2, pairing=((1, 1), (1, 0)))
        assert basis.pairing_inverse == ((0, 1), (1, -1))

    def test_rejects_asymmetric(self):
        """Verify asymmetric pairings are refused."""
        with pytest.raises(ValueError) as exc_info:
            Basis(rank=2, pairing=((1, 2), (0, 1)))
        assert "symmetric" in str(exc_info.value)

    def test_rejects_singular(self):
        """Verify singular pairings are refused."""
        with pytest.raises(ValueError):
            rational_matrix_inverse([[1, 2], [2, 4]])


class TestLaurentQ:
    """Tests for Laurent polynomials in q."""

    def test_binomial_negative_top(self):
        """Verify the generalized binomial for negative k."""
        assert binomial(-1, 3) == -1
        assert binomial(-2, 2) == 3
        assert binomial(5, 2) == 10
        assert binomial(3, -1) == 0

    def test_d_operator_positive_powers(self):
        """Verify D q^3 = 1 + q + q^2."""
        assert scalar({3: 1}).d_operator() == scalar({0: 1, 1: 1, 2: 1})

    def test_d_operator_negative_powers(self):
        """Verify D q^-2 = -(q^-2 + q^-1)."""
        assert scalar({-2: 1}).d_operator() == scalar({-2: -1, -1: -1})

    @given(coeffs=st.dictionaries(st.integers(-3, 4), small, max_size=5))
    @settings(max_examples=30)
    def test_d_operator_reconstructs(self, coeffs):
        """Verify (q - 1) D t + t(1) = t."""
        t = scalar(coeffs)
        rebuilt = t.d_operator().mul_poly({1: ONE, 0: -ONE}) + LaurentQ.constant(t.eval_at(1))
        assert rebuilt == t

    def test_eval_at_zero_with_negative_powers(self):
        """Verify evaluating q^-1 at zero raises PoleError."""
        with pytest.raises(PoleError):
            scalar({-1: 1}).eval_at(0)

    def test_eval_at_root_of_unity(self):
        """Verify 1 + q + q^2 vanishes at a primitive cube root of unity."""
        assert scalar({0: 1, 1: 1, 2: 1}).eval_at(root_of_unity(4)).is_zero()

    def test_divide_linear(self):
        """Verify (q^2 - 1) / (q - 1) = q + 1 and non-divisors are refused."""
        f = scalar({2: 1, 0: -1})
        assert f.divide_linear(ONE) == scalar({1: 1, 0: 1})
        with pytest.raises(ValueError):
            f.divide_linear(CycloRational.from_rational(2))

    def test_one_minus_q(self):
        """Verify the dilaton shift vanishes at q = 1."""
        v = LaurentQ.one_minus_q(POINT_BASIS, CONFIG)
        assert v.eval_at(1).is_zero()
        assert v == scalar({0: 1, 1: -1})

    def test_mismatched_bases(self):
        """Verify adding Laurent polynomials over different bases fails."""
        other = Basis(rank=2, pairing=((1, 0), (0, 1)))
        with pytest.raises(ConfigMismatchError):
            scalar({0: 1}) + LaurentQ.one_minus_q(other, CONFIG)


class TestRationalQ:
    """Tests for rational functions with nonzero poles."""

    def test_reduces_common_factors(self):
        """Verify (q^2 - 1)/(q - 1) reduces to q + 1."""
        f = with_poles(scalar({2: 1, 0: -1}), [(1, 1)])
        assert f.is_laurent()
        assert f.to_laurent() == scalar({1: 1, 0: 1})

    def test_rejects_pole_at_zero(self):
        """Verify poles at q = 0 are refused."""
        with pytest.raises(ValueError):
            with_poles(scalar({0: 1}), [(0, 1)])

    def test_eval_at_pole(self):
        """Verify evaluation at a pole raises PoleError."""
        f = with_poles(scalar({0: 1}), [(2, 1)])
        with pytest.raises(PoleError):
            f.eval_at(2)
        assert value(f.eval_at(3)) == 1

    def test_addition_over_common_denominator(self):
        """Verify 1/(q - 2) - 1/(q - 2) = 0 and 1/(q-1) + 1/(q+1) = 2q/(q^2-1)."""
        a = with_poles(scalar({0: 1}), [(2, 1)])
        assert (a - a).is_zero()
        b = with_poles(scalar({0: 1}), [(1, 1)]) + with_poles(scalar({0: 1}), [(-1, 1)])
        assert b == with_poles(scalar({1: 2}), [(1, 1), (-1, 1)])

    @given(
        laurent=st.dictionaries(st.integers(-2, 3), small, max_size=4),
        principal=st.lists(small.filter(lambda c: c != 0), min_size=1, max_size=2),
        pole=rational_poles,
    )
    @settings(max_examples=30)
    def test_laurent_part_strips_principal_parts(self, laurent, principal, pole):
        """Verify [L + sum c_j/(q - a)^j]+ = L."""
        L = scalar(laurent)
        m = len(principal)
        a = CycloRational.from_rational(pole)
        # numerator of L*(q - a)^m + sum c_j (q - a)^(m - j)
        numerator = L
        for _ in range(m):
            numerator = numerator.mul_poly({1: ONE, 0: -a})
        for j, c in enumerate(principal, start=1):
            term = scalar({0: c})
            for _ in range(m - j):
                term = term.mul_poly({1: ONE, 0: -a})
            numerator = numerator + term
        f = RationalQ(numerator, [(a, m)])
        assert laurent_part(f) == L

    def test_laurent_part_matches_sympy_apart(self):
        """Verify [f]+ against sympy's partial fractions."""
        f = with_poles(scalar({-1: 3, 2: 1, 4: -2}), [(2, 2), (-1, 1)])
        expr = sympy.apart(to_sympy(f), X)
        kept = 0
        for term in sympy.Add.make_args(expr):
            den = sympy.denom(term)
            # drop principal parts at nonzero poles
            if sympy.degree(den, X) > 0 and den.subs(X, 0) != 0:
                continue
            kept += term
        expected = sympy.expand(kept)
        ours = laurent_part(f)
        for k, v in ours.items():
            assert value(v) == Fraction(str(expected.coeff(X, k)))
        assert sympy.expand(expected - to_sympy(RationalQ(ours))) == 0

    def test_taylor_at_regular_point(self):
        """Verify Taylor coefficients of 1/(q - 2) at q = 1."""
        f = with_poles(scalar({0: 1}), [(2, 1)])
        coeffs = [value(c) for c in f.taylor_at(1, 3)]
        # 1/(q - 2) = -1/(1 - s) at q = 1 + s
        assert coeffs == [-1, -1, -1]


class TestJetsAndTransforms:
    """Tests for jets at roots of unity and the q-substitutions."""

    def test_jet_of_square_at_minus_one(self):
        """Verify the jet of q^2 at q = -1 in the coordinate q/root - 1."""
        jet = jet_at_root(scalar({2: 1}), -1)
        assert value(jet.value) == 1
        assert value(jet.derivative) == 2

    def test_jet_at_zeta(self):
        """Verify the jet of q at a primitive 12th root is (root, root)."""
        jet = jet_at_root(scalar({1: 1}), ZETA)
        assert value(jet.value) == ZETA
        assert value(jet.derivative) == ZETA

    def test_jet_at_pole(self):
        """Verify jets at poles raise PoleError."""
        with pytest.raises(PoleError):
            jet_at_root(with_poles(scalar({0: 1}), [(-1, 1)]), -1)

    def test_t2_new_transform_polynomial(self):
        """Verify q -> -(q + 2)/(q + 1)."""
        g = t2_new_transform(scalar({1: 1}))
        assert g == with_poles(scalar({1: -1, 0: -2}), [(-1, 1)])

    def test_t2_new_transform_negative_power(self):
        """Verify q^-1 -> -1/((q + 1)(q + 2))."""
        g = t2_new_transform(scalar({-1: 1}))
        assert g == with_poles(scalar({0: -1}), [(-1, 1), (-2, 1)])

    def test_t2_new_transform_shift_identity(self):
        """Verify g(q - 1) = -tbar2(q + 1)/q at a sample point."""
        tbar2 = scalar({-1: 2, 0: 1, 2: -3})
        g = t2_new_transform(tbar2)
        q = Fraction(5)
        assert value(g.eval_at(q - 1)) == -value(tbar2.eval_at(q + 1)) / q

    def test_subst_inverse_power(self):
        """Verify 1/(q - 1) at q = x^-2 equals -x^2/((x - 1)(x + 1))."""
        f = with_poles(scalar({0: 1}), [(1, 1)])
        g = subst_inverse_power(f, 2)
        assert g == with_poles(scalar({2: -1}), [(1, 1), (-1, 1)])
        assert value(g.eval_at(2)) == value(f.eval_at(Fraction(1, 4)))

    def test_subst_inverse_power_needs_roots(self):
        """Verify poles whose roots leave Q(zeta_12) raise PoleError."""
        f = with_poles(scalar({0: 1}), [(2, 1)])
        with pytest.raises(PoleError):
            subst_inverse_power(f, 2)

    def test_subst_inverse_power_rejects_bad_r(self):
        """Verify r must be a positive integer."""
        with pytest.raises(ValueError):
            subst_inverse_power(scalar({0: 1}), 0)

    def test_subst_power(self):
        """Verify q/(q - 1) at q^2 equals q^2/((q - 1)(q + 1))."""
        f = with_poles(scalar({1: 1}), [(1, 1)])
        g = subst_power(f, 2)
        assert g == with_poles(scalar({2: 1}), [(1, 1), (-1, 1)])
        assert value(g.eval_at(3)) == value(f.eval_at(9))

    def test_subst_power_pole_at_minus_one(self):
        """Verify 1/(q + 1) at q^2 has its poles at the square roots of -1."""
        g = subst_power(with_poles(scalar({0: 1}), [(-1, 1)]), 2)
        assert sorted(m for _, m in g.poles) == [1, 1]
        assert value(g.eval_at(2)) == Fraction(1, 5)

    def test_subst_power_needs_roots(self):
        """Verify poles whose roots leave Q(zeta_12) raise PoleError."""
        with pytest.raises(PoleError):
            subst_power(with_poles(scalar({0: 1}), [(2, 1)]), 2)

    def test_expansion_at_pole(self):
        """Verify 1/((q + 1)(q - 2)) kept through (q + 1)^1 at q = -1."""
        f = with_poles(scalar({0: 1}), [(-1, 1), (2, 1)])
        expanded = expansion_at(f, -1, 1)
        assert expanded == with_poles(scalar({0: Fraction(-4, 9), 1: Fraction(-1, 9)}), [(-1, 1)])

    def test_expansion_at_regular_point(self):
        """Verify a regular point keeps only the Taylor polynomial."""
        f = with_poles(scalar({0: 1}), [(2, 1)])
        expanded = expansion_at(f, -1, 1)
        assert expanded.is_laurent()
        assert expanded.to_laurent() == scalar({0: Fraction(-4, 9), 1: Fraction(-1, 9)})

    def test_expansion_at_rejects_negative_degree(self):
        """Verify the kept degree must be non-negative."""
        with pytest.raises(ValueError):
            expansion_at(with_poles(scalar({0: 1}), [(-1, 1)]), -1, -1)


class TestResidues:
    """Tests for residues of f(x) dx/x."""

    def test_simple_pole(self):
        """Verify residues of dx/(x (x - 2))."""
        f = with_poles(scalar({0: 1}), [(2, 1)])
        assert value(residue_form(f, 2)) == Fraction(1, 2)
        assert value(residue_form(f, 0)) == Fraction(-1, 2)
        assert value(residue_form(f, INFINITY)).is_zero()

    def test_constant_form(self):
        """Verify dx/x has residue 1 at zero and -1 at infinity."""
        f = scalar({0: 1})
        assert value(residue_form(f, 0)) == 1
        assert value(residue_form(f, INFINITY)) == -1

    def test_regular_point(self):
        """Verify the residue at a regular nonzero point is zero."""
        f = with_poles(scalar({0: 1}), [(2, 1)])
        assert residue_form(f, 3).is_zero()

    @given(
        laurent=st.dictionaries(st.integers(-2, 3), small, min_size=1, max_size=4),
        poles=st.dictionaries(rational_poles, st.integers(1, 2), max_size=2),
    )
    @settings(max_examples=20, deadline=None)
    def test_residues_match_sympy(self, laurent, poles):
        """Verify finite residues against sympy and that all residues sum to zero."""
        f = with_poles(scalar(laurent), list(poles.items()))
        expr = to_sympy(f) / X
        total = CycloRational.from_rational(0)
        for point in residue_points(f):
            res = value(residue_form(f, point))
            total = total + res
            if point != INFINITY:
                oracle = sympy.residue(expr, X, sympy.Rational(str(point.rational_value())))
                assert res == Fraction(str(oracle))
        assert total.is_zero()

    def test_residue_theorem_at_roots_of_unity(self):
        """Verify residues at 12th roots of unity sum to zero with 0 and infinity."""
        f = RationalQ(scalar({3: 1, -1: 2}), [(root_of_unity(2), 1), (root_of_unity(10), 2)])
        total = CycloRational.from_rational(0)
        for point in residue_points(f):
            total = total + value(residue_form(f, point))
        assert total.is_zero()


class TestScalarProducts:
    """Tests for products with scalar functions and components."""

    def test_component_and_product(self):
        """Verify a rank-2 function splits into scalar components."""
        basis = Basis(rank=2, pairing=((1, 0), (0, 1)))
        e0 = KVector.basis_vector(basis, CONFIG, 0)
        e1 = KVector.basis_vector(basis, CONFIG, 1, 3)
        f = RationalQ(LaurentQ(basis, CONFIG, {1: e0, 0: e1}), [(CycloRational.from_rational(2), 1)])
        assert component(f, 0) == with_poles(scalar({1: 1}), [(2, 1)])
        assert component(f, 1) == with_poles(scalar({0: 3}), [(2, 1)])
        g = with_poles(scalar({0: 1, 1: -1}), [(-1, 1)])
        product = rational_times_scalar(f, g)
        assert product.pole_order(CycloRational.from_rational(-1)) == 1
        assert component(product, 1) == with_poles(scalar({0: 3, 1: -3}), [(2, 1), (-1, 1)])
