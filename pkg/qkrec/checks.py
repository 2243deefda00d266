"""
Identity suites for the reconstruction engine.

Each suite draws its instances from a seeded random.Random, so a
(suite, seed, order) triple always runs the same checks. Instances are
plain picklable tuples and can run in a ProcessPoolExecutor.

Usage:
    from qkrec.checks import run_suite, summary_table

    result = run_suite("string", seed=0, order=2)
    print(summary_table([result]))
"""

import logging
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

from tabulate import tabulate

from qkrec import dmconst
from qkrec.correlators import (
    CorrelatorBackend,
    CorrelatorTable,
    TauVector,
    chi_point_g0,
    validate_table,
)
from qkrec.qfun import POINT_BASIS, KVector, LaurentQ, RationalQ
from qkrec.reconstruct import (
    CaseInputs,
    assemble_F1M,
    case2_jets,
    case2_residue_identity,
    compute_A_and_jacobian,
    compute_G,
    compute_tau,
    compute_tbar,
    compute_y,
    compute_y2L,
    jacobian_oracle,
    jacobian_shift,
    mat_truncate,
    residue_sum,
    wdvv_sides,
)
from qkrec.ring import Series, SeriesRingConfig, root_of_unity
from qkrec.utils import BUNDLED_TABLE

logger = logging.getLogger(__name__)

SUITES = ("string", "dilaton", "wdvv", "contraction", "jacobian", "residue", "dmconst", "case2-residue")
DEFAULT_INSTANCES = {
    "string": 200,
    "dilaton": 200,
    "wdvv": 3,
    "contraction": 20,
    "jacobian": 6,
    "residue": 50,
    "dmconst": 5,
    "case2-residue": 4,
}
MAX_WORKERS_CAP = 16
MAX_ORDER = 3
PARAMETER = "eps"
DMCONST_FAMILIES = ("2a", "2c", "cyclic3", "cyclic4", "cyclic6")

# (level, q-exponent, rational coefficient as text, eps power)
Term = Tuple[int, int, str, int]


@dataclass
class SuiteResult:
    """Consolidated result of one suite run."""

    suite: str
    seed: int
    order: int
    total: int = 0
    passed: int = 0
    failed: int = 0
    results: List[Dict[str, Any]] = field(default_factory=list)
    duration: float = 0.0

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def to_json(self) -> Dict[str, Any]:
        # duration is left out so reports stay reproducible
        return {
            "suite": self.suite,
            "seed": self.seed,
            "order": self.order,
            "total": self.total,
            "passed": self.passed,
            "failed": self.failed,
            "results": self.results,
        }


def validate_suite_params(suite: str, order: int, instances: Optional[int], max_workers: int) -> None:
    """
    Validate suite parameters.

    Raises:
        ValueError: If any parameter is invalid
    """
    if suite not in SUITES:
        raise ValueError(f"Invalid suite: {suite}. Choose from: {', '.join(SUITES)}")
    if not isinstance(order, int) or order < 1 or order > MAX_ORDER:
        raise ValueError(f"order must be between 1 and {MAX_ORDER}, got: {order}")
    if instances is not None and (not isinstance(instances, int) or instances < 1 or instances > 1000):
        raise ValueError(f"instances must be between 1 and 1000, got: {instances}")
    if not isinstance(max_workers, int) or max_workers < 1 or max_workers > 32:
        raise ValueError(f"max_workers must be between 1 and 32, got: {max_workers}")


# =============================================================================
# INSTANCE CONSTRUCTION
# =============================================================================


def _ring(order: int) -> SeriesRingConfig:
    return SeriesRingConfig(variables=(PARAMETER,), truncation_order=order)


def _coefficient(config: SeriesRingConfig, value: str, power: int) -> Series:
    eps = Series.variable(config, PARAMETER)
    return (eps**power) * Fraction(value)


def build_inputs(terms: Sequence[Term], order: int) -> Tuple[SeriesRingConfig, Dict[int, LaurentQ]]:
    """Point-target inputs t_r(q) from (level, exponent, coefficient, eps power) terms."""
    config = _ring(order)
    t: Dict[int, LaurentQ] = {}
    for r, k, value, power in terms:
        vector = KVector.unit(POINT_BASIS, config, _coefficient(config, value, power))
        monomial = LaurentQ.monomial(k, vector)
        t[r] = t[r] + monomial if r in t else monomial
    return config, t


def _random_rational(rng: random.Random) -> str:
    num = rng.choice([-3, -2, -1, 1, 2, 3])
    return str(Fraction(num, rng.choice([1, 1, 2, 3])))


def random_spec(rng: random.Random, order: int, r_max: int) -> List[Term]:
    """
    t_1 an arbitrary Laurent polynomial; t_2 and t_3 arbitrary with eps powers
    high enough that the tau_r copies stay within the evaluated r-cycle
    configurations; t_r in (q - 1) K[q, 1/q] for r >= 4.

    t_2 starts at eps^1 for order <= 2 and eps^2 for order 3; t_3 starts at
    eps^1 for order 1 and eps^2 above. The (q - 1) multiples keep tau_r = 0.
    """
    terms: List[Term] = []
    for _ in range(rng.randint(1, 3)):
        terms.append((1, rng.randint(-1, 2), _random_rational(rng), rng.randint(1, order)))
    for r in range(2, r_max + 1):
        lowest = _lowest_free_power(r, order)
        for _ in range(rng.randint(0, 2)):
            k, value = rng.randint(-1, 1), _random_rational(rng)
            if lowest is not None and lowest <= order and rng.random() < 0.5:
                terms.append((r, k, value, rng.randint(lowest, order)))
                continue
            power = rng.randint(1, order)
            negated = str(-Fraction(value))
            terms.extend([(r, k + 1, value, power), (r, k, negated, power)])
    return terms


def _lowest_free_power(r: int, order: int) -> Optional[int]:
    """Smallest eps power at which t_r may have t_r(1) != 0, or None."""
    if r == 2:
        return 1 if order <= 2 else 2
    if r == 3:
        return 1 if order == 1 else 2
    return None


def _random_laurent_terms(rng: random.Random, count: int) -> List[Tuple[int, int]]:
    return [(rng.randint(-3, 3), rng.choice([-2, -1, 1, 2, 3])) for _ in range(count)]


def build_instances(suite: str, seed: int, order: int, instances: Optional[int] = None) -> List[Tuple]:
    """Picklable task tuples (suite, instance id, order, payload)."""
    rng = random.Random(f"{suite}:{seed}")
    count = instances or DEFAULT_INSTANCES[suite]
    tasks: List[Tuple] = []
    for idx in range(count):
        if suite in ("string", "dilaton"):
            n = rng.randint(3, 6)
            payload: Any = [_random_laurent_terms(rng, rng.randint(1, 3)) for _ in range(n)]
        elif suite == "wdvv":
            payload = [_random_rational(rng), rng.randint(1, order)]
        elif suite in ("contraction", "case2-residue"):
            payload = random_spec(rng, order, rng.randint(1, 3) if suite == "contraction" else 2)
        elif suite == "jacobian":
            # the delta perturbation of tau_2 survives in three copies at order 3
            r = 1 + idx % 2 if order <= 2 else 1
            terms = [(r, rng.randint(-1, 2), _random_rational(rng), rng.randint(1, order)) for _ in range(2)]
            payload = [r, terms]
        elif suite == "residue":
            poles = [(rng.randrange(12), rng.randint(1, 2)) for _ in range(rng.randint(1, 3))]
            payload = [_random_laurent_terms(rng, rng.randint(1, 4)), poles]
        else:
            payload = DMCONST_FAMILIES[idx % len(DMCONST_FAMILIES)]
        tasks.append((suite, idx, order, payload))
    return tasks


# =============================================================================
# INSTANCE CHECKS
# =============================================================================


def _scalar_laurent(config: SeriesRingConfig, terms: Sequence[Tuple[int, int]]) -> LaurentQ:
    out = LaurentQ.zero(POINT_BASIS, config)
    for k, c in terms:
        out = out + LaurentQ.scalar(config, {k: Series.constant(config, c)})
    return out


def _point_backend() -> CorrelatorBackend:
    return CorrelatorBackend(CorrelatorTable.load(BUNDLED_TABLE))


def _check_string(order: int, payload: Any) -> Tuple[bool, str]:
    config = _ring(order)
    inputs = [_scalar_laurent(config, terms) for terms in payload]
    unit = LaurentQ.scalar(config, {0: Series.one(config)})
    lhs = chi_point_g0([unit] + inputs)
    rhs = chi_point_g0(inputs)
    for i, content in enumerate(inputs):
        rhs = rhs + chi_point_g0(inputs[:i] + [content.d_operator()] + inputs[i + 1 :])
    return lhs == rhs, f"lhs={lhs} rhs={rhs}"


def _check_dilaton(order: int, payload: Any) -> Tuple[bool, str]:
    config = _ring(order)
    inputs = [_scalar_laurent(config, terms) for terms in payload]
    dilaton = LaurentQ.scalar(config, {1: Series.one(config), 0: -Series.one(config)})
    lhs = chi_point_g0([dilaton] + inputs)
    rhs = chi_point_g0(inputs) * (len(inputs) - 2)
    return lhs == rhs, f"lhs={lhs} rhs={rhs}"


def _check_wdvv(order: int, payload: Any) -> Tuple[bool, str]:
    value, power = payload
    config = _ring(order)
    tau = TauVector(POINT_BASIS, config, {1: KVector.unit(POINT_BASIS, config, _coefficient(config, value, power))})
    unit = KVector.unit(POINT_BASIS, config)
    sides = wdvv_sides(_point_backend(), unit, unit, tau)
    return sides.holds, f"tau_1={value}*{PARAMETER}^{power}, clearing power {sides.clearing_power}"


def _check_contraction(order: int, payload: Any) -> Tuple[bool, str]:
    config, t = build_inputs(payload, order)
    backend = _point_backend()
    result = compute_tau(backend, t, POINT_BASIS, config)
    compute_tbar(backend, t, result.tau, levels=sorted(t))
    ok = result.contracting and result.iterations <= order + 1
    return ok, f"gaps={result.gap_orders} iterations={result.iterations}"


def _check_jacobian(order: int, payload: Any) -> Tuple[bool, str]:
    r, terms = payload
    config, t = build_inputs(terms, order)
    backend = _point_backend()
    tau = compute_tau(backend, t, POINT_BASIS, config).tau
    tbar = compute_tbar(backend, t, tau, levels=[r])
    _, J = compute_A_and_jacobian(backend, r, tau, tbar)
    oracle = jacobian_oracle(backend, t, r, POINT_BASIS, config)
    expected = mat_truncate(J, order - 1)
    return expected == oracle, f"r={r} jacobian={expected[0][0]} oracle={oracle[0][0]}"


def _check_residue(order: int, payload: Any) -> Tuple[bool, str]:
    terms, poles = payload
    config = _ring(order)
    f = RationalQ(_scalar_laurent(config, terms), [(root_of_unity(k), m) for k, m in poles])
    total = residue_sum(f)
    return total.is_zero(), f"residue sum {total}"


def _check_dmconst(order: int, payload: Any) -> Tuple[bool, str]:
    report = dmconst.verify_dilaton_recursion(payload, 8)
    return report.passed, f"{payload}: {len(report.results)} identities"


def _check_case2(order: int, payload: Any) -> Tuple[bool, str]:
    config, t = build_inputs(payload, order)
    backend = _point_backend()
    tau = compute_tau(backend, t, POINT_BASIS, config).tau
    tbar = compute_tbar(backend, t, tau, levels=[1, 2])
    G1 = compute_G(backend, tau, 1)
    _, J2 = compute_A_and_jacobian(backend, 2, tau, tbar)
    shift2 = jacobian_shift(J2, POINT_BASIS, config)
    y2 = compute_y(backend, 2, tau, tbar, shift2, G1)
    y2L = compute_y2L(backend, tau, tbar, G1)
    jets = case2_jets(backend, tau, tbar, shift2, G1, y2, y2L)
    v = LaurentQ.one_minus_q(POINT_BASIS, config)
    inputs = CaseInputs(xbar={r: v + tb for r, tb in tbar.items()}, y={2: y2}, y2L=y2L)
    identity = case2_residue_identity(assemble_F1M(2, backend, tau, inputs))
    detail = f"lhs={identity.lhs} at_minus_one={identity.at_minus_one} finite_poles={identity.finite_poles}"
    return identity.holds and jets.consistent, detail


CHECKS = {
    "string": _check_string,
    "dilaton": _check_dilaton,
    "wdvv": _check_wdvv,
    "contraction": _check_contraction,
    "jacobian": _check_jacobian,
    "residue": _check_residue,
    "dmconst": _check_dmconst,
    "case2-residue": _check_case2,
}


def run_instance(task: Tuple) -> Dict[str, Any]:
    """
    Run one instance; exceptions become failed results.

    Args:
        task: Tuple of (suite, instance id, order, payload)
    """
    suite, idx, order, payload = task
    result: Dict[str, Any] = {"instance": idx, "passed": False, "detail": "", "error": None}
    try:
        passed, detail = CHECKS[suite](order, payload)
        result["passed"] = bool(passed)
        result["detail"] = detail
    except Exception as e:  # pylint: disable=broad-except
        result["error"] = f"{type(e).__name__}: {e}"
    return result


def _table_instance() -> Dict[str, Any]:
    report = validate_table(CorrelatorTable.load(BUNDLED_TABLE))
    return {
        "instance": "table",
        "passed": report.valid,
        "detail": f"checked={report.checked} skipped={report.skipped}",
        "error": None,
    }


def run_suite(
    suite: str,
    seed: int = 0,
    order: int = 2,
    instances: Optional[int] = None,
    max_workers: int = 1,
) -> SuiteResult:
    """
    Run every instance of a suite.

    Args:
        suite: One of SUITES
        seed: Random seed for instance generation
        order: Truncation order N
        instances: Instance count override
        max_workers: Worker processes (capped at MAX_WORKERS_CAP); 1 runs inline

    Returns:
        SuiteResult with per-instance results sorted by instance id
    """
    validate_suite_params(suite, order, instances, max_workers)
    tasks = build_instances(suite, seed, order, instances)
    start_time = time.time()
    results: List[Dict[str, Any]] = []
    workers = min(max_workers, MAX_WORKERS_CAP, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(run_instance, task): task for task in tasks}
            for future in as_completed(futures):
                results.append(future.result())
    else:
        results = [run_instance(task) for task in tasks]
    results.sort(key=lambda item: item["instance"])
    if suite in ("string", "dilaton"):
        results.append(_table_instance())

    passed = sum(1 for item in results if item["passed"])
    outcome = SuiteResult(
        suite=suite,
        seed=seed,
        order=order,
        total=len(results),
        passed=passed,
        failed=len(results) - passed,
        results=results,
        duration=time.time() - start_time,
    )
    logger.info("suite %s: %d/%d passed", suite, passed, outcome.total)
    return outcome


def run_suites(
    names: Sequence[str],
    seed: int = 0,
    order: int = 2,
    instances: Optional[int] = None,
    max_workers: int = 1,
) -> List[SuiteResult]:
    """Run several suites; 'all' expands to every suite."""
    expanded: List[str] = []
    for name in names:
        expanded.extend(SUITES if name == "all" else [name])
    return [run_suite(name, seed, order, instances, max_workers) for name in expanded]


def summary_table(results: Sequence[SuiteResult]) -> str:
    rows = [
        [r.suite, r.total, r.passed, r.failed, f"{r.duration:.2f}s", "PASS" if r.ok else "FAIL"]
        for r in results
    ]
    headers = ["Suite", "Instances", "Passed", "Failed", "Time", "Status"]
    return tabulate(rows, headers=headers, tablefmt="grid")
