"""
Correlator backend for permutation-equivariant quantum K-invariants.

This module provides:
- Exact genus-0 point-target correlators, defined by the string equation on
  (L-1)-jets and memoized
- CorrelatorTable: validated JSON store of equivariant and genus-1 base
  correlators with per-entry provenance
- CorrelatorBackend: routes base queries and assembles double brackets
  <<...>>_{g,l} with tau insertions
- validate_table(): string and dilaton consistency of table entries

Slot exponents always denote powers of (L - 1): the insertion
(L-1)^j phi_alpha at an r-cycle is written (r, j, alpha).
"""

import hashlib
import logging
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

from qkrec.errors import MissingEntryError, SpecError
from qkrec.qfun import POINT_BASIS, Basis, KVector, LaurentQ, binomial
from qkrec.ring import ZERO, CycloRational, Series, SeriesRingConfig, as_cyclo, root_of_unity
from qkrec.utils import dump_json, load_json_file

logger = logging.getLogger(__name__)

TABLE_SCHEMA = "qkrec-table-v1"

Slot = Tuple[int, int, int]  # (cycle length r, (L-1)-exponent, basis index)


# =============================================================================
# CYCLE TYPES, INSERTIONS, TAU
# =============================================================================


@dataclass(frozen=True)
class CycleType:
    """
    Cycle type l = (l_1, l_2, ...) of a permutation of marked points.

    counts[r - 1] is the number of r-cycles; trailing zeros are stripped.
    """

    counts: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError(f"cycle counts must be non-negative, got: {counts}")
        while counts and counts[-1] == 0:
            counts = counts[:-1]
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_levels(cls, levels: Iterable[int]) -> "CycleType":
        counts: List[int] = []
        for r in levels:
            if r < 1:
                raise ValueError(f"cycle length must be positive, got: {r}")
            if len(counts) < r:
                counts.extend([0] * (r - len(counts)))
            counts[r - 1] += 1
        return cls(tuple(counts))

    def count(self, r: int) -> int:
        return self.counts[r - 1] if 0 < r <= len(self.counts) else 0

    @property
    def factorial(self) -> int:
        """l! = prod_r l_r!"""
        return math.prod(math.factorial(c) for c in self.counts)

    @property
    def size(self) -> int:
        """|l| = sum_r r l_r, the number of marked points."""
        return sum(r * c for r, c in enumerate(self.counts, start=1))

    @property
    def cycle_weight(self) -> Fraction:
        """prod_r r^(-l_r)"""
        return Fraction(1, math.prod(r**c for r, c in enumerate(self.counts, start=1)))

    def __add__(self, other: "CycleType") -> "CycleType":
        width = max(len(self.counts), len(other.counts))
        a = self.counts + (0,) * (width - len(self.counts))
        b = other.counts + (0,) * (width - len(other.counts))
        return CycleType(tuple(x + y for x, y in zip(a, b)))

    def to_json(self) -> List[int]:
        return list(self.counts)

    def __str__(self) -> str:
        return "+".join(f"{c}_{r}" for r, c in enumerate(self.counts, start=1) if c) or "0"


def is_stable(genus: int, cycle_type: CycleType) -> bool:
    return 2 * genus - 2 + cycle_type.size > 0


@dataclass(frozen=True)
class Insertion:
    """Input at one r-cycle: a K-valued Laurent polynomial in L."""

    r: int
    content: LaurentQ

    def __post_init__(self) -> None:
        if self.r < 1:
            raise ValueError(f"cycle length must be positive, got: {self.r}")

    @classmethod
    def constant(cls, r: int, vector: KVector) -> "Insertion":
        return cls(r, LaurentQ.constant(vector))


class TauVector:
    """tau = (tau_1, tau_2, ...): one KVector per cycle length."""

    __slots__ = ("basis", "config", "_levels")

    def __init__(self, basis: Basis, config: SeriesRingConfig, levels: Optional[Dict[int, KVector]] = None):
        self.basis = basis
        self.config = config
        self._levels = {r: v for r, v in (levels or {}).items() if not v.is_zero()}

    @classmethod
    def zero(cls, basis: Basis, config: SeriesRingConfig) -> "TauVector":
        return cls(basis, config)

    def get(self, r: int) -> KVector:
        return self._levels.get(r) or KVector.zero(self.basis, self.config)

    def levels(self) -> List[int]:
        """Cycle lengths with nonzero entries, ascending."""
        return sorted(self._levels)

    def shift(self, r: int) -> "TauVector":
        """R_r index shift: (tau_r, tau_2r, ...)."""
        return TauVector(
            self.basis, self.config, {k // r: v for k, v in self._levels.items() if k % r == 0}
        )

    def replace(self, r: int, value: KVector) -> "TauVector":
        levels = dict(self._levels)
        levels[r] = value
        return TauVector(self.basis, self.config, levels)

    def __sub__(self, other: "TauVector") -> "TauVector":
        keys = set(self._levels) | set(other._levels)
        return TauVector(self.basis, self.config, {r: self.get(r) - other.get(r) for r in keys})

    def is_zero(self) -> bool:
        return not self._levels

    def order(self) -> Union[int, float]:
        return min((v.order() for v in self._levels.values()), default=math.inf)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TauVector):
            return NotImplemented
        return self.basis == other.basis and self._levels == other._levels

    def __hash__(self) -> int:
        return hash((self.basis, frozenset(self._levels.items())))

    def to_json(self) -> Dict[str, list]:
        return {str(r): self._levels[r].to_json() for r in self.levels()}


# =============================================================================
# GENUS-0 POINT TARGET
# =============================================================================

_POINT_CACHE: Dict[Tuple[int, ...], int] = {}
_POINT_LOCK = threading.Lock()


def point_correlator(jets: Sequence[int], use_cache: bool = True) -> int:
    """
    <(L-1)^j1, ..., (L-1)^jn>_{0,n} for the point target.

    Defined by the string equation: peel a j = 0 slot,
    <1, t_1, ..., t_n> = <t_1, ..., t_n> + sum_i <..., D t_i, ...>,
    with D (L-1)^j = (L-1)^(j-1), base <1,1,1> = 1 and vanishing beyond
    the dimension n - 3.

    Raises:
        ValueError: For n < 3 (unstable)
    """
    key = tuple(sorted(jets, reverse=True))
    if len(key) < 3:
        raise ValueError(f"unstable genus-0 correlator with {len(key)} points")
    if use_cache:
        with _POINT_LOCK:
            cached = _POINT_CACHE.get(key)
        if cached is not None:
            return cached
    value = _point_by_string(key, use_cache)
    if use_cache:
        with _POINT_LOCK:
            _POINT_CACHE.setdefault(key, value)
    return value


def _point_by_string(key: Tuple[int, ...], use_cache: bool) -> int:
    n = len(key)
    if sum(key) > n - 3:
        return 0
    if n == 3:
        return 1
    # sorted descending with sum <= n - 3, so the last slot is a constant
    rest = list(key[:-1])
    total = point_correlator(rest, use_cache)
    for i, j in enumerate(rest):
        if j:
            reduced = rest.copy()
            reduced[i] -= 1
            total += point_correlator(reduced, use_cache)
    return total


def point_cache_size() -> int:
    with _POINT_LOCK:
        return len(_POINT_CACHE)


def clear_point_cache() -> None:
    with _POINT_LOCK:
        _POINT_CACHE.clear()


def jets_of(content: LaurentQ, bound: int) -> List[KVector]:
    """(L-1)-jets a_0, ..., a_bound of sum_k c_k L^k: a_j = sum_k C(k, j) c_k."""
    jets = []
    for j in range(bound + 1):
        total = KVector.zero(content.basis, content.config)
        for k, v in content.items():
            c = binomial(k, j)
            if c:
                total = total + v * c
        jets.append(total)
    return jets


def chi_point_g0(inputs: Sequence[LaurentQ], use_cache: bool = True) -> Series:
    """
    <t_1(L), ..., t_n(L)>_{0,n} for scalar (rank-1) Laurent inputs.

    Raises:
        ValueError: For n < 3
    """
    n = len(inputs)
    if n < 3:
        raise ValueError(f"unstable genus-0 correlator with {n} points")
    config = inputs[0].config
    bound = n - 3
    options = []
    for content in inputs:
        jets = jets_of(content, bound)
        options.append([(j, a.components[0]) for j, a in enumerate(jets) if not a.is_zero()])
    total = Series.zero(config)
    for combo in _bounded_products(options, bound):
        coeff = Series.one(config)
        for _, c in combo:
            coeff = coeff * c
            if coeff.is_zero():
                break
        if coeff.is_zero():
            continue
        value = point_correlator([j for j, _ in combo], use_cache)
        if value:
            total = total + coeff * value
    return total


def _bounded_products(options: List[List[Tuple[int, Any]]], bound: int) -> Iterator[List[Tuple[int, Any]]]:
    """Products of per-slot (jet, data) options with total jet at most bound."""

    def walk(idx: int, used: int, acc: List[Tuple[int, Any]]) -> Iterator[List[Tuple[int, Any]]]:
        if idx == len(options):
            yield list(acc)
            return
        for option in options[idx]:
            if used + option[0] > bound:
                continue
            acc.append(option)
            yield from walk(idx + 1, used + option[0], acc)
            acc.pop()

    return walk(0, 0, [])


# =============================================================================
# GENUS-0 EQUIVARIANT POINT TARGET
# =============================================================================

# Primitive cube roots of unity, zeta_12^4 and zeta_12^8
CUBE_ROOTS = (root_of_unity(4), root_of_unity(8))


def equivariant_point_g0(
    contents: Sequence[LaurentQ], cycles: Dict[int, int], config: SeriesRingConfig
) -> Series:
    """
    <f_1(L), ..., f_m(L), 1_{r}, ...>_{0} for the point target: level-1 slots
    with contents f_i and unit insertions on cycles[r] cycles of each length
    r >= 2.

    Constant level-1 slots are peeled by the string equation, with D acting
    on the level-1 slots only (no boundary divisor of an r-cycle point is
    fixed). c (L - 1) slots are peeled by the dilaton equation with factor
    m - 3. The remaining configurations are trace formulas on the fixed loci:

        every slot constant     product of the constants
        f at one 2-cycle        f(-1)
        f at one 3-cycle        sum over primitive cube roots w of f(w) / (1 - w)
        f at two 2-cycles       f(1)/4 + 3 f(-1)/4 - f'(-1)/2

    Raises:
        ValueError: For unstable configurations or cycle lengths below 2
        MissingEntryError: For configurations outside these rules
    """
    cycles = {r: c for r, c in cycles.items() if c}
    if any(r < 2 for r in cycles):
        raise ValueError(f"cycle lengths must be at least 2, got: {sorted(cycles)}")
    if len(contents) + sum(r * c for r, c in cycles.items()) < 3:
        raise ValueError("unstable genus-0 configuration")
    return _equivariant_value(list(contents), cycles, config)


def _scalar_at(f: LaurentQ, point: CycloRational) -> Series:
    return f.eval_at(point).components[0]


def _is_constant(f: LaurentQ) -> bool:
    return all(k == 0 for k, _ in f.items())


def _dilaton_coefficient(f: LaurentQ) -> Optional[Series]:
    """c if f = c (L - 1), else None."""
    if any(k not in (0, 1) for k, _ in f.items()):
        return None
    c = f.coefficient(1)
    if c.is_zero() or not (c + f.coefficient(0)).is_zero():
        return None
    return c.components[0]


def _equivariant_value(contents: List[LaurentQ], cycles: Dict[int, int], config: SeriesRingConfig) -> Series:
    if any(f.is_zero() for f in contents):
        return Series.zero(config)
    m = len(contents)
    if m + sum(r * c for r, c in cycles.items()) > 3:
        for i, f in enumerate(contents):
            if not _is_constant(f):
                continue
            rest = contents[:i] + contents[i + 1 :]
            total = _equivariant_value(rest, cycles, config)
            for j, g in enumerate(rest):
                dg = g.d_operator()
                if not dg.is_zero():
                    total = total + _equivariant_value(rest[:j] + [dg] + rest[j + 1 :], cycles, config)
            return total * f.coefficient(0).components[0]
        for i, f in enumerate(contents):
            c = _dilaton_coefficient(f)
            if c is not None:
                rest = contents[:i] + contents[i + 1 :]
                return _equivariant_value(rest, cycles, config) * c * (m - 3)
    if all(_is_constant(f) for f in contents):
        total = Series.one(config)
        for f in contents:
            total = total * f.coefficient(0).components[0]
        return total
    if m == 1:
        f = contents[0]
        if cycles == {2: 1}:
            return _scalar_at(f, as_cyclo(-1))
        if cycles == {3: 1}:
            total = Series.zero(config)
            for w in CUBE_ROOTS:
                total = total + _scalar_at(f, w) * (1 - w).inverse()
            return total
        if cycles == {2: 2}:
            derivative = f.taylor_at(-1, 2)[1].components[0]
            return (
                _scalar_at(f, as_cyclo(1)) * Fraction(1, 4)
                + _scalar_at(f, as_cyclo(-1)) * Fraction(3, 4)
                - derivative * Fraction(1, 2)
            )
    raise MissingEntryError([_describe(contents, cycles)])


def _describe(contents: List[LaurentQ], cycles: Dict[int, int]) -> str:
    counts = [len(contents)] + [cycles.get(r, 0) for r in range(2, max(cycles, default=1) + 1)]
    degrees = ",".join(f"[{f.min_exp},{f.max_exp}]" for f in contents)
    return f"g=0;l={counts};d=0;level-1 contents in L-degrees {degrees or 'none'}"


# =============================================================================
# CORRELATOR TABLES
# =============================================================================


@dataclass(frozen=True, order=True)
class TableKey:
    """Canonical key: slots are sorted, so order within a cycle length is irrelevant."""

    genus: int
    cycle_type: Tuple[int, ...]
    degree: int
    slots: Tuple[Slot, ...]

    @classmethod
    def make(cls, genus: int, degree: int, slots: Iterable[Slot]) -> "TableKey":
        slots = tuple(sorted(tuple(int(x) for x in s) for s in slots))
        ctype = CycleType.from_levels(s[0] for s in slots)
        return cls(genus, ctype.counts, degree, slots)

    @property
    def ctype(self) -> CycleType:
        return CycleType(self.cycle_type)

    @property
    def block(self) -> Tuple[int, Tuple[int, ...], int]:
        return (self.genus, self.cycle_type, self.degree)

    def without(self, index: int) -> "TableKey":
        return TableKey.make(self.genus, self.degree, self.slots[:index] + self.slots[index + 1 :])

    def with_slot(self, index: int, slot: Slot) -> "TableKey":
        slots = list(self.slots)
        slots[index] = slot
        return TableKey.make(self.genus, self.degree, slots)

    def canonical(self) -> str:
        slots = ",".join(f"({r},{j},{a})" for r, j, a in self.slots)
        return f"g={self.genus};l={list(self.cycle_type)};d={self.degree};slots=[{slots}]"

    def to_json(self) -> Dict[str, Any]:
        return {
            "genus": self.genus,
            "cycle_type": list(self.cycle_type),
            "degree": self.degree,
            "slots": [{"r": r, "exponent": j, "basis": a} for r, j, a in self.slots],
        }


Block = Tuple[int, Tuple[int, ...], int]


class CorrelatorTable:
    """
    Immutable store of base correlators.

    Inside a declared complete block (genus, cycle type, degree) an absent
    entry means zero; anywhere else an absent entry is missing data.
    """

    def __init__(
        self,
        basis: Basis,
        entries: Optional[Dict[TableKey, CycloRational]] = None,
        provenance: Optional[Dict[TableKey, str]] = None,
        complete_blocks: Optional[Dict[Block, str]] = None,
        source: str = "<memory>",
        metadata: Optional[Dict[str, str]] = None,
    ):
        self.basis = basis
        self.entries: Dict[TableKey, CycloRational] = dict(entries or {})
        self.provenance: Dict[TableKey, str] = dict(provenance or {})
        self.complete_blocks: Dict[Block, str] = dict(complete_blocks or {})
        self.metadata: Dict[str, str] = dict(metadata or {})
        self.source = source
        for key in self.entries:
            if not is_stable(key.genus, key.ctype):
                raise SpecError(f"unstable entry {key.canonical()} must be absent from {source}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: TableKey) -> bool:
        return key in self.entries

    def keys(self) -> List[TableKey]:
        return sorted(self.entries)

    def lookup(self, key: TableKey) -> Optional[CycloRational]:
        """Entry value, zero inside a complete block, None if missing."""
        value = self.entries.get(key)
        if value is not None:
            return value
        if key.block in self.complete_blocks:
            return ZERO
        return None

    def degrees(self, genus: int) -> List[int]:
        found = {k.degree for k in self.entries if k.genus == genus}
        found |= {b[2] for b in self.complete_blocks if b[0] == genus}
        return sorted(found | {0})

    # ------------------------------------------------------------------
    # JSON
    # ------------------------------------------------------------------

    @classmethod
    def from_json(cls, data: Any, source: str = "<json>") -> "CorrelatorTable":
        """
        Build a table from its parsed JSON document.

        Raises:
            SpecError: On schema violations, float values or conflicting duplicates
        """
        if not isinstance(data, dict) or data.get("schema") != TABLE_SCHEMA:
            raise SpecError(f"{source}: expected schema '{TABLE_SCHEMA}'")
        target = data.get("target", {"rank": 1, "pairing": [["1"]]})
        try:
            basis = Basis(
                rank=int(target["rank"]),
                pairing=tuple(tuple(Fraction(str(x)) for x in row) for row in target["pairing"]),
                unit_index=int(target.get("unit_index", 0)),
                dimension=int(target.get("dimension", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SpecError(f"{source}: invalid target: {e}") from e

        entries: Dict[TableKey, CycloRational] = {}
        provenance: Dict[TableKey, str] = {}
        for idx, raw in enumerate(data.get("entries", [])):
            try:
                key = TableKey.make(
                    int(raw["genus"]),
                    int(raw.get("degree", 0)),
                    [(s["r"], s["exponent"], s["basis"]) for s in raw["slots"]],
                )
                value = CycloRational.from_json(raw["value"])
            except (KeyError, TypeError, ValueError) as e:
                raise SpecError(f"{source}: entry {idx} is malformed: {e}") from e
            if "cycle_type" in raw and CycleType(tuple(raw["cycle_type"])).counts != key.cycle_type:
                raise SpecError(f"{source}: entry {idx} cycle_type does not match its slots")
            if any(a >= basis.rank or j < 0 for _, j, a in key.slots):
                raise SpecError(f"{source}: entry {idx} has an invalid slot")
            if key in entries and entries[key] != value:
                raise SpecError(f"{source}: conflicting values for {key.canonical()}")
            entries[key] = value
            provenance[key] = str(raw.get("provenance", ""))

        blocks: Dict[Block, str] = {}
        for raw in data.get("complete_blocks", []):
            try:
                block = (int(raw["genus"]), CycleType(tuple(raw["cycle_type"])).counts, int(raw.get("degree", 0)))
            except (KeyError, TypeError, ValueError) as e:
                raise SpecError(f"{source}: malformed complete block: {e}") from e
            blocks[block] = str(raw.get("provenance", ""))
        metadata = data.get("metadata", {})
        if not isinstance(metadata, dict):
            raise SpecError(f"{source}: metadata must be an object")
        metadata = {str(k): str(v) for k, v in metadata.items()}
        table = cls(basis, entries, provenance, blocks, source=source, metadata=metadata)
        logger.info("loaded %d entries from %s (sha256 %s)", len(table), source, table.checksum()[:12])
        return table

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CorrelatorTable":
        return cls.from_json(load_json_file(path), source=str(path))

    def to_json(self) -> Dict[str, Any]:
        entries = []
        for key in self.keys():
            item = key.to_json()
            item["value"] = self.entries[key].to_json()
            item["provenance"] = self.provenance.get(key, "")
            entries.append(item)
        blocks = [
            {"genus": g, "cycle_type": list(c), "degree": d, "provenance": p}
            for (g, c, d), p in sorted(self.complete_blocks.items())
        ]
        target = self.basis.to_json()
        target["unit_index"] = self.basis.unit_index
        return {
            "schema": TABLE_SCHEMA,
            "target": target,
            "metadata": dict(self.metadata),
            "complete_blocks": blocks,
            "entries": entries,
        }

    def checksum(self) -> str:
        """sha256 of the canonical JSON dump."""
        return hashlib.sha256(dump_json(self.to_json()).encode("utf-8")).hexdigest()


def g1_base_correlator(table: CorrelatorTable, key: TableKey) -> CycloRational:
    """
    Genus-1 base correlator from the table.

    Raises:
        ValueError: If the key is not a genus-1 key
        MissingEntryError: If the entry is absent outside a complete block
    """
    if key.genus != 1:
        raise ValueError(f"genus-1 key expected, got genus {key.genus}")
    value = table.lookup(key)
    if value is None:
        raise MissingEntryError([key.canonical()])
    return value


# =============================================================================
# TABLE VALIDATION
# =============================================================================


@dataclass
class ValidationReport:
    """Outcome of validate_table()."""

    checked: int = 0
    skipped: int = 0
    violations: List[Dict[str, str]] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_json(self) -> Dict[str, Any]:
        return {
            "valid": self.valid,
            "checked": self.checked,
            "skipped": self.skipped,
            "violations": self.violations,
        }


def _level_one_count(key: TableKey) -> int:
    return sum(1 for r, _, _ in key.slots if r == 1)


def validate_table(table: CorrelatorTable) -> ValidationReport:
    """
    Check every applicable string and dilaton instance among present entries.

    A level-1 slot (1, 0, unit) triggers the string equation, a level-1 slot
    (1, 1, unit) the dilaton equation with factor l_1 + 2g - 2, l_1 counting
    the remaining level-1 slots. Instances whose reduced entries are unstable
    or unavailable are counted as skipped.
    """
    report = ValidationReport()
    unit = table.basis.unit_index
    for key in table.keys():
        actual = table.entries[key]
        seen: Set[Slot] = set()
        for idx, slot in enumerate(key.slots):
            if slot in seen or slot[0] != 1 or slot[2] != unit or slot[1] > 1:
                continue
            seen.add(slot)
            reduced = key.without(idx)
            if not is_stable(reduced.genus, reduced.ctype):
                report.skipped += 1
                continue
            expected = _expected_value(table, reduced, string=slot[1] == 0)
            if expected is None:
                report.skipped += 1
                continue
            report.checked += 1
            if expected != actual:
                kind = "string" if slot[1] == 0 else "dilaton"
                report.violations.append(
                    {
                        "equation": kind,
                        "key": key.canonical(),
                        "expected": str(expected),
                        "actual": str(actual),
                    }
                )
    if report.violations:
        logger.warning("%s: %d violations", table.source, len(report.violations))
    return report


def _expected_value(table: CorrelatorTable, reduced: TableKey, string: bool) -> Optional[CycloRational]:
    base = table.lookup(reduced)
    if base is None:
        return None
    if not string:
        return base * (_level_one_count(reduced) + 2 * reduced.genus - 2)
    total = base
    for idx, (r, j, a) in enumerate(reduced.slots):
        if r != 1 or j == 0:
            continue
        lowered = table.lookup(reduced.with_slot(idx, (r, j - 1, a)))
        if lowered is None:
            return None
        total = total + lowered
    return total


# =============================================================================
# DOUBLE BRACKETS
# =============================================================================


class CorrelatorBackend:
    """
    Base correlators and double brackets for one target.

    Genus-0 degree-0 queries for the point target use the string recursion
    (level 1) or the fixed-locus evaluator (r-cycles); everything else comes
    from the table. In collecting mode (strict=False) missing keys are
    recorded in `missing` and read as zero.
    """

    def __init__(
        self,
        table: Optional[CorrelatorTable] = None,
        basis: Optional[Basis] = None,
        cycle_weight_in_brackets: bool = True,
        use_cache: bool = True,
        strict: bool = True,
    ):
        self.table = table
        self.basis = basis or (table.basis if table is not None else POINT_BASIS)
        if table is not None and table.basis != self.basis:
            raise ValueError("table target does not match the backend basis")
        self.cycle_weight_in_brackets = cycle_weight_in_brackets
        self.use_cache = use_cache
        self.strict = strict
        self.missing: Set[str] = set()
        self.point_target = self.basis.rank == 1 and self.basis.dimension == 0

    def correlator(self, key: TableKey) -> CycloRational:
        """
        Base correlator <...>_{g,l,d}.

        Raises:
            MissingEntryError: In strict mode, for absent entries
        """
        if not is_stable(key.genus, key.ctype):
            return ZERO
        if self.point_target and key.genus == 0 and all(r == 1 for r, _, _ in key.slots):
            if key.degree:
                return ZERO
            return CycloRational.from_rational(
                point_correlator([j for _, j, _ in key.slots], self.use_cache)
            )
        value = self.table.lookup(key) if self.table is not None else None
        if value is None:
            if self.strict:
                raise MissingEntryError([key.canonical()])
            self.missing.add(key.canonical())
            return ZERO
        return value

    def jet_bound(self, genus: int, cycle_type: CycleType) -> int:
        return max(0, 3 * genus - 3 + cycle_type.size + self.basis.dimension)

    def _degrees(self, genus: int, config: SeriesRingConfig) -> List[int]:
        if not config.novikov_enabled or self.table is None:
            return [0]
        return [d for d in self.table.degrees(genus) if d <= config.truncation_order]

    def _equivariant_g0(self, insertions: Sequence[Insertion], config: SeriesRingConfig) -> Series:
        """Point-target genus 0 with r-cycles, r >= 2, holding constant contents."""
        level_one = [ins.content for ins in insertions if ins.r == 1]
        cycles: Dict[int, int] = {}
        scale = Series.one(config)
        try:
            for ins in insertions:
                if ins.r == 1:
                    continue
                if not _is_constant(ins.content):
                    raise MissingEntryError(
                        [f"g=0;level-{ins.r} content in L-degrees [{ins.content.min_exp},{ins.content.max_exp}]"]
                    )
                cycles[ins.r] = cycles.get(ins.r, 0) + 1
                scale = scale * ins.content.coefficient(0).components[0]
            if scale.is_zero():
                return scale
            return equivariant_point_g0(level_one, cycles, config) * scale
        except MissingEntryError as exc:
            if self.strict:
                raise
            self.missing.update(exc.keys)
            return Series.zero(config)

    def correlate(self, genus: int, insertions: Sequence[Insertion], degree: int = 0) -> Series:
        """
        Multilinear base correlator <t_1(L), ...>_{g,l,d} (no tau insertions).

        Slot contents are expanded in (L-1)-jets up to the dimension bound.
        Genus-0 point-target queries with r-cycles, r >= 2, are evaluated
        on the full Laurent contents instead: their values are
        quasi-polynomial in the exponent of L.
        """
        config = insertions[0].content.config
        ctype = CycleType.from_levels(ins.r for ins in insertions)
        if not is_stable(genus, ctype):
            return Series.zero(config)
        if self.point_target and genus == 0 and ctype.size > ctype.count(1):
            return self._equivariant_g0(insertions, config) if degree == 0 else Series.zero(config)
        bound = self.jet_bound(genus, ctype)
        options = []
        for ins in insertions:
            slot_opts = []
            for j, jet in enumerate(jets_of(ins.content, bound)):
                for alpha, comp in enumerate(jet.components):
                    if not comp.is_zero():
                        slot_opts.append((j, (ins.r, alpha, comp)))
            if not slot_opts:
                return Series.zero(config)
            options.append(slot_opts)
        grouped: Dict[TableKey, Series] = {}
        for combo in _bounded_products(options, bound):
            coeff = Series.one(config)
            for _, (_, _, comp) in combo:
                coeff = coeff * comp
                if coeff.is_zero():
                    break
            if coeff.is_zero():
                continue
            key = TableKey.make(genus, degree, [(r, j, alpha) for j, (r, alpha, _) in combo])
            grouped[key] = grouped[key] + coeff if key in grouped else coeff
        total = Series.zero(config)
        for key in sorted(grouped):
            value = self.correlator(key)
            if not value.is_zero():
                total = total + grouped[key] * value
        return total

    def double_bracket(
        self,
        genus: int,
        insertions: Sequence[Insertion],
        tau: TauVector,
        adams: int = 1,
    ) -> Series:
        """
        <<t_1, ...>>_{g,l}(tau) = sum over lbar, d of Q^(adams d) / lbar! <t_1, ..., tau, ...>_{g,l+lbar,d}.

        With cycle_weight_in_brackets each tau_r copy also carries r^-1.
        The sum over lbar stops at the truncation order since every tau
        insertion lies in the maximal ideal.
        """
        config = tau.config
        if any(ins.content.is_zero() for ins in insertions):
            return Series.zero(config)
        limit = config.truncation_order
        levels = tau.levels()
        total = Series.zero(config)
        for lbar in _level_counts(levels, limit):
            weight = Fraction(1, math.prod(math.factorial(c) for c in lbar.values()))
            if self.cycle_weight_in_brackets:
                weight /= math.prod(r**c for r, c in lbar.items())
            slots = list(insertions)
            for r, c in lbar.items():
                slots.extend([Insertion.constant(r, tau.get(r))] * c)
            if not slots:
                continue
            for d in self._degrees(genus, config):
                if adams * d > limit:
                    continue
                value = self.correlate(genus, slots, d)
                if value.is_zero():
                    continue
                if d:
                    value = value * Series.novikov(config, adams * d)
                total = total + value * weight
        return total

    def ancestor_bracket(self, genus: int, insertions: Sequence[Insertion], tau: TauVector) -> Series:
        """
        Double bracket whose slot classes are pulled back along the map
        forgetting the tau points that carry the unit at level 1.

        Write tau_1 = u 1 + v. A pulled-back correlator is unchanged by a
        unit insertion (the string equation without D terms), so those
        points resum to exp(u), while v and the tau_r with r >= 2 stay in
        the descendant bracket. For the point target tau_1 = u 1, so the
        first slot's L^k is the ancestor Lbar^k and sum_k x^k <<Lbar^k, ...>>
        has its pole at x = 1 bounded by the level-1 slot count.
        """
        config = tau.config
        unit = self.basis.unit_index
        u = tau.get(1).components[unit]
        rest = tau.replace(1, tau.get(1) - KVector.unit(self.basis, config, u))
        value = self.double_bracket(genus, insertions, rest)
        if u.is_zero() or value.is_zero():
            return value
        return value * u.exp()


def _level_counts(levels: Sequence[int], limit: int) -> Iterator[Dict[int, int]]:
    """All {r: count} over the given levels with total count at most limit."""
    for counts in product(range(limit + 1), repeat=len(levels)):
        if sum(counts) <= limit:
            yield {r: c for r, c in zip(levels, counts) if c}


def double_bracket_g0(
    backend: CorrelatorBackend,
    insertions: Sequence[Insertion],
    tau: TauVector,
    cycle_type: Optional[CycleType] = None,
) -> Series:
    """
    Genus-0 double bracket.

    Raises:
        ValueError: If cycle_type disagrees with the insertion levels
        MissingEntryError: For equivariant entries absent from the table
    """
    if cycle_type is not None and CycleType.from_levels(i.r for i in insertions) != cycle_type:
        raise ValueError(f"insertions do not have cycle type {cycle_type}")
    return backend.double_bracket(0, insertions, tau)


def no_descendant_potential(backend: CorrelatorBackend, tau: TauVector) -> Series:
    """F_1(tau): the genus-1 double bracket without insertions."""
    return backend.double_bracket(1, [], tau)
