"""
Correlator backend tests: point recursion, tables, validation and double brackets.
"""

import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkrec.correlators import (
    CorrelatorBackend,
    CorrelatorTable,
    CycleType,
    Insertion,
    TableKey,
    TauVector,
    chi_point_g0,
    double_bracket_g0,
    equivariant_point_g0,
    g1_base_correlator,
    is_stable,
    jets_of,
    no_descendant_potential,
    point_correlator,
    validate_table,
)
from qkrec.errors import MissingEntryError, SpecError
from qkrec.qfun import POINT_BASIS, KVector, LaurentQ
from qkrec.ring import ZERO, CycloRational, Series, SeriesRingConfig
from tests import POINT_TABLE

CONFIG = SeriesRingConfig(variables=("eps", "delta"), truncation_order=3)
EPS = Series.variable(CONFIG, "eps")
DELTA = Series.variable(CONFIG, "delta")

small = st.fractions(min_value=-3, max_value=3, max_denominator=4)
laurent_inputs = st.dictionaries(st.integers(-1, 2), small, min_size=1, max_size=3)


def scalar(coeffs) -> LaurentQ:
    return LaurentQ.scalar(CONFIG, {k: Series.constant(CONFIG, c) for k, c in coeffs.items()})


def unit(value=1) -> KVector:
    return KVector.unit(POINT_BASIS, CONFIG, value)


# (L - 1)^J for J = 0, 1, 2
L_MINUS_ONE_POWERS = [scalar({0: 1}), scalar({1: 1, 0: -1}), scalar({2: 1, 1: -2, 0: 1})]


def table_doc(entries, blocks=()):
    return {
        "schema": "qkrec-table-v1",
        "target": {"rank": 1, "pairing": [["1"]]},
        "complete_blocks": list(blocks),
        "entries": list(entries),
    }


def g1_entry(exponents, value):
    return {
        "genus": 1,
        "degree": 0,
        "slots": [{"r": 1, "exponent": j, "basis": 0} for j in exponents],
        "value": value,
    }


class TestCycleType:
    """Tests for cycle types and stability."""

    def test_from_levels(self):
        """Verify counts, size and automorphism factors."""
        ctype = CycleType.from_levels([1, 1, 3, 2, 1])
        assert ctype.counts == (3, 1, 1)
        assert ctype.size == 8
        assert ctype.factorial == 6
        assert ctype.cycle_weight == Fraction(1, 6)
        assert str(ctype) == "3_1+1_2+1_3"

    def test_trailing_zeros_stripped(self):
        """Verify trailing zero counts do not change equality."""
        assert CycleType((2, 0, 0)) == CycleType((2,))

    def test_stability(self):
        """Verify 2g - 2 + |l| > 0."""
        assert not is_stable(0, CycleType((2,)))
        assert is_stable(0, CycleType((3,)))
        assert is_stable(0, CycleType((1, 1)))
        assert not is_stable(1, CycleType(()))
        assert is_stable(1, CycleType((1,)))


class TestPointCorrelator:
    """Tests for the genus-0 point-target recursion."""

    def test_all_constants(self):
        """Verify <1, ..., 1>_{0,n} = 1."""
        for n in range(3, 9):
            assert point_correlator([0] * n) == 1

    def test_unstable(self):
        """Verify fewer than three points raise ValueError."""
        with pytest.raises(ValueError) as exc_info:
            point_correlator([0, 0])
        assert "unstable" in str(exc_info.value)

    def test_dimension_bound(self):
        """Verify correlators vanish when the jets exceed n - 3."""
        assert point_correlator([1, 0, 0]) == 0
        assert point_correlator([2, 1, 0, 0, 0]) == 0

    @given(jets=st.lists(st.integers(0, 3), min_size=3, max_size=7))
    @settings(max_examples=60)
    def test_multinomial_closed_form(self, jets):
        """Verify <(L-1)^J>_{0,n} = (n-3)! / (prod J! (n-3-|J|)!)."""
        n, total = len(jets), sum(jets)
        expected = 0
        if total <= n - 3:
            expected = math.factorial(n - 3) // (
                math.prod(math.factorial(j) for j in jets) * math.factorial(n - 3 - total)
            )
        assert point_correlator(jets) == expected
        assert point_correlator(jets, use_cache=False) == expected

    def test_jets_of(self):
        """Verify L^2 = 1 + 2(L-1) + (L-1)^2."""
        jets = jets_of(scalar({2: 1}), 3)
        assert [j.components[0].constant_term() for j in jets] == [1, 2, 1, 0]


class TestChiPointG0:
    """Tests for string and dilaton equations of the point target."""

    @given(inputs=st.lists(laurent_inputs, min_size=3, max_size=4))
    @settings(max_examples=30, deadline=None)
    def test_string_equation(self, inputs):
        """Verify <1, t...> = <t...> + sum_i <..., D t_i, ...>."""
        ts = [scalar(c) for c in inputs]
        lhs = chi_point_g0([scalar({0: 1})] + ts)
        rhs = chi_point_g0(ts)
        for i in range(len(ts)):
            lowered = ts[:i] + [ts[i].d_operator()] + ts[i + 1 :]
            rhs = rhs + chi_point_g0(lowered)
        assert lhs == rhs

    @given(inputs=st.lists(laurent_inputs, min_size=3, max_size=4))
    @settings(max_examples=30, deadline=None)
    def test_dilaton_equation(self, inputs):
        """Verify <L - 1, t...>_{0,n+1} = (n - 2) <t...>_{0,n}."""
        ts = [scalar(c) for c in inputs]
        lhs = chi_point_g0([scalar({1: 1, 0: -1})] + ts)
        assert lhs == chi_point_g0(ts) * (len(ts) - 2)

    def test_unstable(self):
        """Verify two inputs raise ValueError."""
        with pytest.raises(ValueError):
            chi_point_g0([scalar({0: 1})] * 2)


class TestEquivariantPointG0:
    """Tests for the genus-0 point correlators with r-cycles."""

    @given(st.integers(-3, 5))
    def test_two_cycle_evaluates_at_minus_one(self, k):
        """Verify <L^k; 1_2>_0 = (-1)^k."""
        assert equivariant_point_g0([scalar({k: 1})], {2: 1}, CONFIG) == (-1) ** k

    def test_three_cycle(self):
        """Verify <(L-1)^J; 1_3>_0 for J = 0, 1, 2."""
        values = [equivariant_point_g0([shifted], {3: 1}, CONFIG) for shifted in L_MINUS_ONE_POWERS]
        assert values == [1, -2, 3]

    def test_two_two_cycles(self):
        """Verify <(L-1)^J; 1_2, 1_2>_0 for J = 0, 1, 2."""
        values = [equivariant_point_g0([shifted], {2: 2}, CONFIG) for shifted in L_MINUS_ONE_POWERS]
        assert values == [1, -2, 5]

    def test_string_equation(self):
        """Verify a unit slot peels off through D: <1, L^2; 1_2>_0 = <L^2; 1_2>_0 + <1 + L; 1_2>_0."""
        with_unit = equivariant_point_g0([scalar({0: 1}), scalar({2: 1})], {2: 1}, CONFIG)
        single = equivariant_point_g0([scalar({2: 1})], {2: 1}, CONFIG)
        derived = equivariant_point_g0([scalar({0: 1, 1: 1})], {2: 1}, CONFIG)
        assert (single, derived) == (1, 0)
        assert with_unit == 1

    def test_contents_scale(self):
        """Verify constant contents multiply through."""
        value = equivariant_point_g0([scalar({0: 3}), scalar({0: Fraction(1, 2)})], {2: 1}, CONFIG)
        assert value == Fraction(3, 2)

    def test_rejects_level_one_cycles(self):
        """Verify cycle lengths below 2 are refused."""
        with pytest.raises(ValueError) as exc_info:
            equivariant_point_g0([scalar({0: 1})] * 3, {1: 1}, CONFIG)
        assert "at least 2" in str(exc_info.value)

    def test_rejects_unstable(self):
        """Verify unstable configurations are refused."""
        with pytest.raises(ValueError):
            equivariant_point_g0([], {2: 1}, CONFIG)

    def test_unsupported_configuration(self):
        """Verify configurations without a closed form raise MissingEntryError."""
        square = scalar({2: 1, 1: -2, 0: 1})
        with pytest.raises(MissingEntryError) as exc_info:
            equivariant_point_g0([square, square], {2: 1}, CONFIG)
        assert exc_info.value.keys == ["g=0;l=[2, 1];d=0;level-1 contents in L-degrees [0,2],[0,2]"]


class TestTauVector:
    """Tests for tau vectors and the Adams index shift."""

    def test_shift(self):
        """Verify R_2 keeps the even levels."""
        tau = TauVector(POINT_BASIS, CONFIG, {1: unit(EPS), 2: unit(DELTA), 4: unit(EPS * 2)})
        shifted = tau.shift(2)
        assert shifted.levels() == [1, 2]
        assert shifted.get(1) == unit(DELTA)
        assert shifted.get(2) == unit(EPS * 2)

    def test_zero_levels_dropped(self):
        """Verify zero entries are not stored."""
        tau = TauVector(POINT_BASIS, CONFIG, {1: unit(0)})
        assert tau.is_zero()
        assert tau.order() == math.inf

    def test_difference_order(self):
        """Verify the order of a difference of iterates."""
        a = TauVector(POINT_BASIS, CONFIG, {1: unit(EPS + DELTA * DELTA)})
        b = TauVector(POINT_BASIS, CONFIG, {1: unit(EPS)})
        assert (a - b).order() == 2


class TestCorrelatorTable:
    """Tests for loading and validating correlator tables."""

    def test_bundled_table_is_consistent(self):
        """Verify the bundled table satisfies string and dilaton checks."""
        table = CorrelatorTable.load(POINT_TABLE)
        report = validate_table(table)
        assert report.valid
        assert report.checked > 0
        assert len(table.checksum()) == 64

    def test_bundled_genus_one_values(self):
        """Verify the genus-1 fixture values."""
        table = CorrelatorTable.load(POINT_TABLE)
        key = TableKey.make(1, 0, [(1, 0, 0)] * 4)
        assert g1_base_correlator(table, key) == 1
        key = TableKey.make(1, 0, [(1, 1, 0), (1, 1, 0), (1, 0, 0), (1, 0, 0)])
        assert g1_base_correlator(table, key) == 6
        # inside the complete block, beyond the dimension
        key = TableKey.make(1, 0, [(1, 4, 0), (1, 0, 0), (1, 0, 0)])
        assert g1_base_correlator(table, key) == ZERO

    def test_bundled_equivariant_fixture(self):
        """Verify the genus-1 cycle fixture repeats the level-1 closed form with unit cycle slots."""
        table = CorrelatorTable.load(POINT_TABLE)
        key = TableKey.make(1, 0, [(1, 1, 0), (1, 0, 0), (2, 0, 0)])
        assert g1_base_correlator(table, key) == 1
        assert g1_base_correlator(table, TableKey.make(1, 0, [(2, 0, 0)])) == 1
        assert g1_base_correlator(table, TableKey.make(1, 0, [(1, 0, 0), (3, 0, 0), (3, 0, 0)])) == 1
        # sum of exponents reaches the level-1 slot count
        assert g1_base_correlator(table, TableKey.make(1, 0, [(1, 1, 0), (2, 0, 0)])) == ZERO

    def test_bundled_metadata(self):
        """Verify the bundled table documents where its values come from."""
        table = CorrelatorTable.load(POINT_TABLE)
        assert table.metadata["generator"] == "generate_point_table.py"
        assert "chi(Mbar_{1,n}, O)" in table.metadata["genus_one_level_one"]
        assert "not a" in table.metadata["genus_one_equivariant"]

    def test_metadata_round_trip(self, tmp_path):
        """Verify metadata survives to_json and load."""
        doc = table_doc([g1_entry([0], "1")])
        doc["metadata"] = {"source": "hand"}
        path = tmp_path / "table.json"
        path.write_text(json.dumps(CorrelatorTable.from_json(doc).to_json()), encoding="utf-8")
        assert CorrelatorTable.load(path).metadata == {"source": "hand"}

    def test_rejects_non_object_metadata(self):
        """Verify metadata must be an object."""
        doc = table_doc([])
        doc["metadata"] = ["source"]
        with pytest.raises(SpecError) as exc_info:
            CorrelatorTable.from_json(doc)
        assert "metadata" in str(exc_info.value)

    def test_g1_requires_genus_one(self):
        """Verify g1_base_correlator refuses genus-0 keys."""
        table = CorrelatorTable.load(POINT_TABLE)
        with pytest.raises(ValueError):
            g1_base_correlator(table, TableKey.make(0, 0, [(1, 0, 0)] * 3))

    def test_slot_order_is_canonical(self):
        """Verify keys do not depend on slot order."""
        a = TableKey.make(0, 0, [(2, 0, 0), (1, 1, 0), (1, 0, 0)])
        b = TableKey.make(0, 0, [(1, 0, 0), (2, 0, 0), (1, 1, 0)])
        assert a == b
        assert a.canonical() == "g=0;l=[2, 1];d=0;slots=[(1,0,0),(1,1,0),(2,0,0)]"

    def test_lookup_complete_and_missing(self):
        """Verify absent entries read as zero only inside complete blocks."""
        blocks = [{"genus": 1, "cycle_type": [2], "degree": 0}]
        table = CorrelatorTable.from_json(table_doc([g1_entry([0, 0], "1")], blocks))
        assert table.lookup(TableKey.make(1, 0, [(1, 0, 0), (1, 1, 0)])) == ZERO
        assert table.lookup(TableKey.make(1, 0, [(1, 0, 0)] * 3)) is None

    def test_rejects_wrong_schema(self):
        """Verify the schema marker is required."""
        doc = table_doc([])
        doc["schema"] = "other"
        with pytest.raises(SpecError):
            CorrelatorTable.from_json(doc)

    def test_rejects_float_values(self):
        """Verify float values are refused."""
        with pytest.raises(SpecError) as exc_info:
            CorrelatorTable.from_json(table_doc([g1_entry([0], 0.5)]))
        assert "entry 0" in str(exc_info.value)

    def test_rejects_conflicting_duplicates(self):
        """Verify duplicate keys with different values are refused."""
        with pytest.raises(SpecError) as exc_info:
            CorrelatorTable.from_json(table_doc([g1_entry([0], "1"), g1_entry([0], "2")]))
        assert "conflicting" in str(exc_info.value)

    def test_rejects_unstable_entries(self):
        """Verify unstable entries are refused."""
        entry = {"genus": 0, "slots": [{"r": 1, "exponent": 0, "basis": 0}] * 2, "value": "1"}
        with pytest.raises(SpecError):
            CorrelatorTable.from_json(table_doc([entry]))

    def test_detects_string_violation(self):
        """Verify an inconsistent genus-1 entry is reported."""
        doc = table_doc([g1_entry([0], "1"), g1_entry([0, 0], "5")])
        report = validate_table(CorrelatorTable.from_json(doc))
        assert not report.valid
        assert report.violations[0]["equation"] == "string"
        assert report.violations[0]["expected"] == "1"

    def test_json_round_trip(self, tmp_path):
        """Verify a table written with to_json loads back with the same checksum."""
        table = CorrelatorTable.load(POINT_TABLE)
        path = tmp_path / "copy.json"
        path.write_text(json.dumps(table.to_json()), encoding="utf-8")
        again = CorrelatorTable.load(path)
        assert again.checksum() == table.checksum()
        assert len(again) == len(table)

    def test_irrational_values(self):
        """Verify cyclotomic values are read from coordinate lists."""
        table = CorrelatorTable.from_json(table_doc([g1_entry([0], ["0", "1", "0", "0"])]))
        assert table.lookup(TableKey.make(1, 0, [(1, 0, 0)])) == CycloRational((0, 1, 0, 0))


class TestDoubleBrackets:
    """Tests for double brackets with tau insertions."""

    def test_string_dilaton_bracket(self):
        """Verify <<eps L, 1>>_{0,2}(tau) = eps tau e^tau."""
        backend = CorrelatorBackend()
        tau = TauVector(POINT_BASIS, CONFIG, {1: unit(DELTA)})
        head = Insertion(1, LaurentQ.monomial(1, unit(EPS)))
        result = backend.double_bracket(0, [head, Insertion.constant(1, unit())], tau)
        assert result == EPS * DELTA + EPS * DELTA * DELTA

    def test_no_descendant_potential(self):
        """Verify F_1(tau) = e^tau - 1 for the bundled fixture."""
        backend = CorrelatorBackend(CorrelatorTable.load(POINT_TABLE))
        tau = TauVector(POINT_BASIS, CONFIG, {1: unit(DELTA)})
        expected = DELTA + DELTA * DELTA * Fraction(1, 2) + DELTA * DELTA * DELTA * Fraction(1, 6)
        assert no_descendant_potential(backend, tau) == expected

    def test_zero_tau(self):
        """Verify the bracket at tau = 0 is the bare correlator."""
        backend = CorrelatorBackend()
        tau = TauVector.zero(POINT_BASIS, CONFIG)
        ones = [Insertion.constant(1, unit(EPS))] * 3
        assert backend.double_bracket(0, ones, tau) == EPS**3

    def test_missing_equivariant_entry_strict(self):
        """Verify strict backends raise MissingEntryError for non-constant cycle contents."""
        backend = CorrelatorBackend(CorrelatorTable.load(POINT_TABLE))
        tau = TauVector(POINT_BASIS, CONFIG, {1: unit(DELTA)})
        with pytest.raises(MissingEntryError) as exc_info:
            backend.double_bracket(0, [Insertion(2, LaurentQ.monomial(1, unit()))], tau)
        assert exc_info.value.keys == ["g=0;level-2 content in L-degrees [1,1]"]

    def test_missing_entries_collected(self):
        """Verify collecting backends record every missing key and read it as zero."""
        backend = CorrelatorBackend(CorrelatorTable.load(POINT_TABLE), strict=False)
        tau = TauVector(POINT_BASIS, CONFIG, {1: unit(DELTA)})
        result = backend.double_bracket(0, [Insertion(2, LaurentQ.monomial(1, unit()))], tau)
        assert result == 0
        assert "g=0;level-2 content in L-degrees [1,1]" in backend.missing

    def test_equivariant_bracket(self):
        """Verify <<1_2>> = e^tau - 1 at tau_1 = delta."""
        backend = CorrelatorBackend(CorrelatorTable.load(POINT_TABLE))
        tau = TauVector(POINT_BASIS, CONFIG, {1: unit(DELTA)})
        result = backend.double_bracket(0, [Insertion.constant(2, unit())], tau)
        expected = DELTA + DELTA * DELTA * Fraction(1, 2) + DELTA * DELTA * DELTA * Fraction(1, 6)
        assert result == expected
        assert not backend.missing

    def test_two_cycles_in_tau(self):
        """Verify tau_2 copies at 2-cycles of <<L^k>>: (-1)^k/2 for one, the trace formula over 8 for two."""
        config = SeriesRingConfig(variables=("eps",), truncation_order=2)
        eps = Series.variable(config, "eps")
        backend = CorrelatorBackend()
        tau = TauVector(POINT_BASIS, config, {2: KVector.unit(POINT_BASIS, config, eps)})
        two_cycles = [1, -1, 2, -2]
        for k in range(4):
            head = Insertion(1, LaurentQ.monomial(k, KVector.unit(POINT_BASIS, config, 1)))
            result = backend.double_bracket(0, [head], tau)
            assert result == eps * Fraction((-1) ** k, 2) + eps * eps * Fraction(two_cycles[k], 8)

    def test_double_bracket_g0_checks_cycle_type(self):
        """Verify a mismatched cycle type is refused."""
        backend = CorrelatorBackend()
        tau = TauVector.zero(POINT_BASIS, CONFIG)
        ones = [Insertion.constant(1, unit())] * 3
        with pytest.raises(ValueError):
            double_bracket_g0(backend, ones, tau, CycleType((2,)))
        assert double_bracket_g0(backend, ones, tau, CycleType((3,))) == 1
