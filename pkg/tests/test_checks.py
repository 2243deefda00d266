"""
Tests for the identity suites and their runner.
"""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkrec.checks import (
    DEFAULT_INSTANCES,
    SUITES,
    SuiteResult,
    build_inputs,
    build_instances,
    run_instance,
    run_suite,
    run_suites,
    summary_table,
    validate_suite_params,
)
from qkrec.qfun import KVector
from qkrec.ring import Series


class TestValidateSuiteParams:
    """Tests for validate_suite_params()."""

    def test_valid(self):
        """Verify accepted parameters pass silently."""
        validate_suite_params("string", 2, None, 4)
        validate_suite_params("wdvv", 3, 10, 1)

    def test_invalid_suite(self):
        """Verify unknown suites are refused."""
        with pytest.raises(ValueError) as exc_info:
            validate_suite_params("mirror", 2, None, 1)
        assert "Invalid suite" in str(exc_info.value)

    @pytest.mark.parametrize("order", [0, 4])
    def test_invalid_order(self, order):
        """Verify the order range."""
        with pytest.raises(ValueError) as exc_info:
            validate_suite_params("string", order, None, 1)
        assert "order" in str(exc_info.value)

    def test_invalid_instances(self):
        """Verify instance counts must be positive."""
        with pytest.raises(ValueError):
            validate_suite_params("string", 2, 0, 1)

    def test_invalid_workers(self):
        """Verify the worker range."""
        with pytest.raises(ValueError):
            validate_suite_params("string", 2, None, 0)
        with pytest.raises(ValueError):
            validate_suite_params("string", 2, None, 33)


class TestInstances:
    """Tests for seeded instance generation."""

    def test_deterministic(self):
        """Verify the same seed yields the same instances."""
        assert build_instances("contraction", 7, 2) == build_instances("contraction", 7, 2)

    def test_seed_changes_instances(self):
        """Verify different seeds give different instances."""
        assert build_instances("string", 0, 2) != build_instances("string", 1, 2)

    def test_default_counts(self):
        """Verify every suite has a default instance count."""
        for suite in SUITES:
            assert len(build_instances(suite, 0, 2)) == DEFAULT_INSTANCES[suite]

    def test_override_count(self):
        """Verify the instance override."""
        tasks = build_instances("residue", 0, 2, instances=3)
        assert [task[1] for task in tasks] == [0, 1, 2]
        assert all(task[0] == "residue" for task in tasks)

    def test_build_inputs(self):
        """Verify terms sum into Laurent polynomials per level."""
        config, t = build_inputs([(1, 1, "1", 1), (1, 0, "-1", 1), (2, 0, "1/2", 2)], 2)
        assert sorted(t) == [1, 2]
        assert t[1].eval_at(1).is_zero()
        eps = Series.variable(config, "eps")
        assert t[1].coefficient(1) == KVector.unit(t[1].basis, config, eps)
        assert t[2].coefficient(0) == KVector.unit(t[2].basis, config, eps * eps * Fraction(1, 2))


class TestRandomSpec:
    """Tests for the random inputs of the contraction and case-2 suites."""

    @given(st.integers(0, 10**6), st.integers(1, 3))
    @settings(max_examples=20, deadline=None)
    def test_free_terms_respect_eps_powers(self, seed, order):
        """Verify t_r(1) starts at the lowest free eps power and vanishes for r >= 4."""
        lowest = {2: 1 if order <= 2 else 2, 3: 1 if order == 1 else 2}
        for task in build_instances("contraction", seed, order, instances=4):
            _, t = build_inputs(task[3], order)
            for r, tr in t.items():
                at_one = tr.eval_at(1)
                if r >= 4:
                    assert at_one.is_zero()
                elif r in lowest:
                    assert at_one.order() >= lowest[r]

    def test_free_level_two_terms_occur(self):
        """Verify the case-2 suite draws inputs with t_2(1) != 0, i.e. tau_2 != 0."""
        free = 0
        for task in build_instances("case2-residue", 0, 2, instances=40):
            _, t = build_inputs(task[3], 2)
            if 2 in t and not t[2].eval_at(1).is_zero():
                free += 1
        assert free > 0

class TestRunInstance:
    """Tests for run_instance()."""

    def test_exception_becomes_failure(self):
        """Verify errors inside a check are captured, not raised."""
        result = run_instance(("dmconst", 0, 2, "cyclic5"))
        assert result["passed"] is False
        assert result["error"].startswith("ValueError")

    def test_passing_instance(self):
        """Verify a passing instance carries a detail string."""
        result = run_instance(("dmconst", 3, 2, "cyclic4"))
        assert result["passed"] is True
        assert result["error"] is None
        assert "cyclic4" in result["detail"]


class TestRunSuite:
    """Tests for run_suite() on small instance counts."""

    @pytest.mark.parametrize("suite", ["string", "dilaton", "residue", "dmconst"])
    def test_suite_passes(self, suite):
        """Verify cheap suites pass on a handful of instances."""
        result = run_suite(suite, seed=0, order=2, instances=5)
        assert result.ok, result.results

    def test_string_includes_table_check(self):
        """Verify the string suite also validates the bundled table."""
        result = run_suite("string", seed=1, order=2, instances=2)
        assert result.total == 3
        assert result.results[-1]["instance"] == "table"
        assert result.results[-1]["passed"] is True

    def test_json_omits_duration(self):
        """Verify suite JSON is reproducible."""
        data = run_suite("dmconst", seed=0, order=2, instances=2).to_json()
        assert "duration" not in data
        assert data["passed"] == 2

    def test_run_suites_expands_names(self):
        """Verify named suites run in order."""
        results = run_suites(["dmconst", "residue"], seed=0, order=1, instances=1)
        assert [r.suite for r in results] == ["dmconst", "residue"]


class TestSummaryTable:
    """Tests for summary_table()."""

    def test_status_column(self):
        """Verify PASS and FAIL markers."""
        good = SuiteResult(suite="string", seed=0, order=2, total=2, passed=2, failed=0)
        bad = SuiteResult(suite="wdvv", seed=0, order=2, total=2, passed=1, failed=1)
        table = summary_table([good, bad])
        assert "PASS" in table
        assert "FAIL" in table
        assert "Suite" in table
