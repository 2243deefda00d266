"""
Command-line front end.

Commands:
    qkrec tau --spec FILE               tau iterates, final tau and tbar(1) residuals
    qkrec f1 --spec FILE                full genus-1 reconstruction report
    qkrec check SUITE                   run an identity suite ('all' runs every suite)
    qkrec table validate FILE           string/dilaton consistency of a table

Reports are JSON with exact coefficient strings. Exit codes: 0 success,
1 failed checks or computation errors, 2 malformed input.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from qkrec.checks import SUITES, run_suites, summary_table
from qkrec.correlators import CorrelatorBackend, CorrelatorTable, validate_table
from qkrec.errors import (
    ConvergenceError,
    MissingEntryError,
    QkrecError,
    ResummationError,
    SpecError,
)
from qkrec.qfun import KVector, LaurentQ
from qkrec.reconstruct import (
    DEFAULT_MAX_RESUM_TERMS,
    ReconstructionInput,
    compute_tau,
    compute_tbar,
    reconstruct_f1,
)
from qkrec.ring import Series, SeriesRingConfig
from qkrec.utils import (
    BUNDLED_TABLE,
    dump_json,
    load_config,
    load_json_file,
    parse_bool,
    resolve_table_path,
    setup_logging,
    validate_toggles,
    write_json,
)

logger = logging.getLogger(__name__)

RUN_SCHEMA = "qkrec-run-v1"
EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2


# =============================================================================
# RUN SPECS
# =============================================================================


@dataclass(frozen=True)
class InputTerm:
    """coefficient * q^exponent * phi_basis at one level."""

    level: int
    exponent: int
    coefficient: str
    basis: int = 0

    def to_json(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "exponent": self.exponent,
            "coefficient": self.coefficient,
            "basis": self.basis,
        }


def parse_coefficient(text: str, config: SeriesRingConfig) -> Series:
    """
    Parse a coefficient such as "eps", "-eps", "3/2*eps", "eps^2*delta" or "1/2".

    Raises:
        SpecError: On unknown variables or malformed factors
    """
    body = text.replace(" ", "")
    if not body:
        raise SpecError("empty coefficient")
    sign = 1
    if body.startswith("-"):
        sign, body = -1, body[1:]
    value = Series.constant(config, sign)
    for factor in body.split("*"):
        name, _, power = factor.partition("^")
        if name in config.variables:
            try:
                exponent = int(power) if power else 1
            except ValueError as e:
                raise SpecError(f"bad exponent in coefficient {text!r}") from e
            if exponent < 0:
                raise SpecError(f"negative exponent in coefficient {text!r}")
            value = value * Series.variable(config, name) ** exponent
            continue
        try:
            value = value * Fraction(factor)
        except (ValueError, ZeroDivisionError) as e:
            raise SpecError(f"unknown factor {factor!r} in coefficient {text!r}") from e
    return value


@dataclass(frozen=True)
class RunSpec:
    """Everything a tau or f1 run needs, as read from a JSON file."""

    variables: tuple
    order: int
    inputs: tuple = ()
    table: Optional[str] = None
    novikov: bool = False
    y_sign: str = "-"
    cycle_weight_in_brackets: bool = True
    a_insertion: str = "level"

    def to_json(self) -> Dict[str, Any]:
        return {
            "schema": RUN_SCHEMA,
            "variables": list(self.variables),
            "order": self.order,
            "novikov": self.novikov,
            "table": self.table,
            "inputs": [term.to_json() for term in self.inputs],
            "toggles": {
                "y_sign": self.y_sign,
                "cycle_weight_in_brackets": self.cycle_weight_in_brackets,
                "a_insertion": self.a_insertion,
            },
        }

    @classmethod
    def from_json(cls, data: Any, defaults: Optional[Dict[str, str]] = None) -> "RunSpec":
        """
        Build a spec from parsed JSON; absent toggles come from the configuration.

        Raises:
            SpecError: On missing or malformed fields
        """
        if not isinstance(data, dict):
            raise SpecError("run spec must be a JSON object")
        if data.get("schema", RUN_SCHEMA) != RUN_SCHEMA:
            raise SpecError(f"expected schema '{RUN_SCHEMA}', got: {data.get('schema')}")
        defaults = defaults or load_config()
        toggles = data.get("toggles", {})
        try:
            inputs = tuple(
                InputTerm(
                    level=int(item["level"]),
                    exponent=int(item["exponent"]),
                    coefficient=str(item["coefficient"]),
                    basis=int(item.get("basis", 0)),
                )
                for item in data.get("inputs", [])
            )
            spec = cls(
                variables=tuple(str(v) for v in data["variables"]),
                order=int(data["order"]),
                inputs=inputs,
                table=data.get("table"),
                novikov=bool(data.get("novikov", False)),
                y_sign=str(toggles.get("y_sign", defaults["y_sign"])),
                cycle_weight_in_brackets=parse_bool(
                    toggles.get("cycle_weight_in_brackets", defaults["cycle_weight"])
                ),
                a_insertion=str(toggles.get("a_insertion", defaults["a_insertion"])),
            )
            validate_toggles(spec.y_sign, spec.a_insertion, DEFAULT_MAX_RESUM_TERMS)
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SpecError):
                raise
            raise SpecError(f"invalid run spec: {e}") from e
        if any(term.level < 1 for term in spec.inputs):
            raise SpecError("input levels must be positive")
        return spec

    @classmethod
    def load(cls, path: str) -> "RunSpec":
        return cls.from_json(load_json_file(path))

    def ring(self) -> SeriesRingConfig:
        try:
            return SeriesRingConfig(
                variables=self.variables, novikov_enabled=self.novikov, truncation_order=self.order
            )
        except ValueError as e:
            raise SpecError(f"invalid ring: {e}") from e


@dataclass
class Prepared:
    """A run spec turned into engine objects."""

    spec: RunSpec
    config: SeriesRingConfig
    backend: CorrelatorBackend
    t: Dict[int, LaurentQ] = field(default_factory=dict)


def prepare(spec: RunSpec, settings: Dict[str, str], strict: bool = True) -> Prepared:
    """
    Load the table and build the inputs t_r(q).

    Raises:
        SpecError: On malformed coefficients or basis indices
        FileNotFoundError: If the table cannot be found
    """
    config = spec.ring()
    path = BUNDLED_TABLE if spec.table is None else resolve_table_path(spec.table, settings["table_path"])
    table = CorrelatorTable.load(path)
    backend = CorrelatorBackend(
        table, cycle_weight_in_brackets=spec.cycle_weight_in_brackets, strict=strict
    )
    t: Dict[int, LaurentQ] = {}
    for term in spec.inputs:
        if not 0 <= term.basis < backend.basis.rank:
            raise SpecError(f"basis index {term.basis} out of range for rank {backend.basis.rank}")
        coeff = parse_coefficient(term.coefficient, config)
        vector = KVector.basis_vector(backend.basis, config, term.basis, coeff)
        monomial = LaurentQ.monomial(term.exponent, vector)
        t[term.level] = t[term.level] + monomial if term.level in t else monomial
    return Prepared(spec=spec, config=config, backend=backend, t=t)


# =============================================================================
# COMMANDS
# =============================================================================


def _emit(data: Any, output: Optional[str]) -> str:
    text = dump_json(data)
    if output:
        write_json(data, output)
    else:
        sys.stdout.write(text)
    return text


def _raise_missing(backend: CorrelatorBackend) -> None:
    if backend.missing:
        raise MissingEntryError(sorted(backend.missing))


def cmd_tau(args: argparse.Namespace, settings: Dict[str, str]) -> int:
    spec = RunSpec.load(args.spec)
    run = prepare(spec, settings, strict=False)
    basis = run.backend.basis
    result = compute_tau(run.backend, run.t, basis, run.config)
    levels = sorted(set(run.t) | {1})
    tbar = compute_tbar(run.backend, run.t, result.tau, int(settings["max_resum_terms"]), levels=levels)
    _raise_missing(run.backend)
    orders = {}
    for r, tb in tbar.items():
        order = tb.eval_at(1).order()
        orders[str(r)] = "inf" if order == float("inf") else int(order)
    report = {
        "spec": spec.to_json(),
        "table_checksums": [run.backend.table.checksum()] if run.backend.table is not None else [],
        "tau": result.to_json(),
        "contracting": result.contracting,
        "tbar_residual_orders": orders,
    }
    _emit(report, args.output)
    return EXIT_OK


def cmd_f1(args: argparse.Namespace, settings: Dict[str, str]) -> int:
    spec = RunSpec.load(args.spec)
    run = prepare(spec, settings, strict=False)
    inp = ReconstructionInput(
        t=run.t,
        basis=run.backend.basis,
        config=run.config,
        backend=run.backend,
        y_sign=spec.y_sign,
        a_insertion=spec.a_insertion,
        max_resum_terms=int(settings["max_resum_terms"]),
    )
    report = reconstruct_f1(inp)
    _raise_missing(run.backend)
    text = _emit(report.to_json(), args.output)
    if args.record_golden:
        Path(args.record_golden).write_text(text, encoding="utf-8")
        logger.info("golden report recorded to %s", args.record_golden)
    if args.golden:
        stored = Path(args.golden).read_text(encoding="utf-8")
        if stored != text:
            print(f"Error: report differs from golden file {args.golden}", file=sys.stderr)
            return EXIT_FAILED
    return EXIT_OK


def cmd_check(args: argparse.Namespace, settings: Dict[str, str]) -> int:
    order = args.order if args.order is not None else int(settings["default_order"])
    workers = args.workers if args.workers is not None else int(settings["max_workers"])
    results = run_suites([args.suite], seed=args.seed, order=order, instances=args.instances, max_workers=workers)
    print(summary_table(results), file=sys.stderr)
    passed = all(r.ok for r in results)
    _emit({"passed": passed, "suites": [r.to_json() for r in results]}, args.output)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_table_validate(args: argparse.Namespace, settings: Dict[str, str]) -> int:
    table = CorrelatorTable.load(args.file)
    report = validate_table(table)
    data = report.to_json()
    data["checksum"] = table.checksum()
    _emit(data, args.output)
    return EXIT_OK if report.valid else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkrec",
        description="Genus-1 reconstruction of permutation-equivariant quantum K-invariants",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default=None,
        help="Logging level (default: QKREC_LOG_LEVEL or WARNING)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tau = sub.add_parser("tau", help="Compute tau and its iterates")
    tau.add_argument("--spec", required=True, help="Run spec JSON file")
    tau.add_argument("--output", default=None, help="Write the report here instead of stdout")

    f1 = sub.add_parser("f1", help="Assemble the genus-1 reconstruction")
    f1.add_argument("--spec", required=True, help="Run spec JSON file")
    f1.add_argument("--output", default=None, help="Write the report here instead of stdout")
    f1.add_argument("--golden", default=None, help="Compare the report with this file byte for byte")
    f1.add_argument("--record-golden", default=None, help="Record the report as a golden file")

    check = sub.add_parser("check", help="Run an identity suite")
    check.add_argument("suite", choices=list(SUITES) + ["all"], help="Suite name")
    check.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    check.add_argument("--order", type=int, default=None, help="Truncation order (default: QKREC_DEFAULT_ORDER)")
    check.add_argument("--instances", type=int, default=None, help="Instances per suite (default: per suite)")
    check.add_argument("--workers", type=int, default=None, help="Worker processes (default: QKREC_MAX_WORKERS)")
    check.add_argument("--output", default=None, help="Write the report here instead of stdout")

    table = sub.add_parser("table", help="Table utilities")
    table_sub = table.add_subparsers(dest="table_command", required=True)
    validate = table_sub.add_parser("validate", help="Check string and dilaton consistency")
    validate.add_argument("file", help="Table JSON file")
    validate.add_argument("--output", default=None, help="Write the report here instead of stdout")
    return parser


COMMANDS = {"tau": cmd_tau, "f1": cmd_f1, "check": cmd_check, "table": cmd_table_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = load_config()
    try:
        setup_logging(args.log_level or settings["log_level"])
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID

    try:
        return COMMANDS[args.command](args, settings)
    except SpecError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except MissingEntryError as e:
        print(f"Error: missing table entries: {e}", file=sys.stderr)
        return EXIT_FAILED
    except (ConvergenceError, ResummationError) as e:
        print(f"Error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILED
    except QkrecError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAILED
    except (FileNotFoundError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
