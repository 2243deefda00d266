#!/usr/bin/env python3
"""
Generator for the bundled point-target correlator table.

Writes qkrec/data/point_table.json: the genus-1 level-1 blocks up to seven
marked points, and a computed fixture for genus-1 blocks with 2- and
3-cycles. Every row follows the closed form

    <(L-1)^j_1, ..., (L-1)^j_m; 1_2, ..., 1_3, ...>_{1} = (m-1)! / (prod j_i! (m-1-sum j_i)!)

which is 1 without level-1 slots and 0 for sum j_i >= m, so the string and
dilaton equations hold on every row. Absent rows inside a block read as zero.

Usage:
    python generate_point_table.py
    python generate_point_table.py --output /tmp/point_table.json

Arguments:
    --output: Target file (default: qkrec/data/point_table.json)
"""

import argparse
import json
import math
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Any, Dict, Iterator, List, Tuple

from qkrec.correlators import TABLE_SCHEMA

DEFAULT_OUTPUT = Path(__file__).parent / "qkrec" / "data" / "point_table.json"

MAX_LEVEL_ONE = 7
MAX_EQUIVARIANT_LEVEL_ONE = 4
MAX_CYCLES = 4
MAX_CYCLE_SLOTS = 5

LEVEL_ONE_PROVENANCE = "closed form (m-1)!/(prod j! (m-1-sum j)!); exponent-0 rows are chi(Mbar_{1,n}, O) = 1"
EQUIVARIANT_PROVENANCE = "computed fixture: level-1 closed form with unit r-cycle slots, not a geometric evaluation"

METADATA = {
    "description": (
        "Genus-1 base correlators of the point target. Genus 0 is computed by the string "
        "recursion and the r-cycle reduction, never tabulated."
    ),
    "genus_one_level_one": (
        "Exponent-0 rows are chi(Mbar_{1,n}, O) = 1, the structure sheaf of the coarse space "
        "having no higher cohomology for n <= 10. Rows with (L-1)-exponents follow the closed "
        "form (m-1)!/(prod j! (m-1-sum j)!), the unique extension satisfying the string and "
        "dilaton equations that vanishes for sum j >= m. It truncates the (L-1)-jets, which "
        "the orbifold values do not."
    ),
    "genus_one_equivariant": (
        "Computed fixture: the level-1 closed form in the level-1 exponents with unit 2- and "
        "3-cycle slots. It satisfies the string and dilaton equations but is not a "
        "Kawasaki-strata evaluation."
    ),
    "generator": "generate_point_table.py",
}


def closed_form(exponents: Tuple[int, ...]) -> int:
    """(m-1)! / (prod j! (m-1-sum j)!) over the level-1 exponents; 1 when there are none."""
    m = len(exponents)
    if m == 0:
        return 1
    total = sum(exponents)
    if total > m - 1:
        return 0
    denominator = math.prod(math.factorial(j) for j in exponents) * math.factorial(m - 1 - total)
    return math.factorial(m - 1) // denominator


def level_one_exponents(m: int) -> Iterator[Tuple[int, ...]]:
    """Sorted exponent tuples of length m with a nonzero closed form."""
    if m == 0:
        yield ()
        return
    for exponents in combinations_with_replacement(range(m), m):
        if sum(exponents) <= m - 1:
            yield exponents


def cycle_type(l1: int, l2: int, l3: int) -> List[int]:
    counts = [l1, l2, l3]
    while counts and counts[-1] == 0:
        counts.pop()
    return counts


def block_json(l1: int, l2: int, l3: int, provenance: str) -> Dict[str, Any]:
    return {"genus": 1, "cycle_type": cycle_type(l1, l2, l3), "degree": 0, "provenance": provenance}


def entry_json(exponents: Tuple[int, ...], l2: int, l3: int, provenance: str) -> Dict[str, Any]:
    slots = [{"r": 1, "exponent": j, "basis": 0} for j in exponents]
    slots += [{"r": 2, "exponent": 0, "basis": 0}] * l2
    slots += [{"r": 3, "exponent": 0, "basis": 0}] * l3
    return {
        "genus": 1,
        "degree": 0,
        "cycle_type": cycle_type(len(exponents), l2, l3),
        "slots": slots,
        "value": str(closed_form(exponents)),
        "provenance": provenance,
    }


def cycle_counts() -> Iterator[Tuple[int, int]]:
    """(l_2, l_3) for the equivariant blocks."""
    for l2 in range(MAX_CYCLES + 1):
        for l3 in range(MAX_CYCLES + 1):
            if 1 <= l2 + l3 <= MAX_CYCLE_SLOTS:
                yield l2, l3


def build_table() -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    """Complete blocks and entries, in file order."""
    blocks: List[Dict[str, Any]] = []
    entries: List[Dict[str, Any]] = []
    for m in range(1, MAX_LEVEL_ONE + 1):
        blocks.append(block_json(m, 0, 0, LEVEL_ONE_PROVENANCE))
        entries.extend(entry_json(e, 0, 0, LEVEL_ONE_PROVENANCE) for e in level_one_exponents(m))
    for l2, l3 in cycle_counts():
        for m in range(MAX_EQUIVARIANT_LEVEL_ONE + 1):
            blocks.append(block_json(m, l2, l3, EQUIVARIANT_PROVENANCE))
            entries.extend(entry_json(e, l2, l3, EQUIVARIANT_PROVENANCE) for e in level_one_exponents(m))
    return blocks, entries


def render(blocks: List[Dict[str, Any]], entries: List[Dict[str, Any]]) -> str:
    """One block or entry per line, so diffs of the table stay readable."""
    lines = [
        "{",
        f'  "schema": {json.dumps(TABLE_SCHEMA)},',
        '  "target": {"rank": 1, "pairing": [["1"]], "unit_index": 0, "dimension": 0},',
        '  "metadata": {',
    ]
    items = list(METADATA.items())
    for i, (key, value) in enumerate(items):
        lines.append(f"    {json.dumps(key)}: {json.dumps(value)}" + ("," if i < len(items) - 1 else ""))
    lines.append("  },")
    lines.append('  "complete_blocks": [')
    lines.extend("    " + json.dumps(b) + ("," if i < len(blocks) - 1 else "") for i, b in enumerate(blocks))
    lines.append("  ],")
    lines.append('  "entries": [')
    lines.extend("    " + json.dumps(e) + ("," if i < len(entries) - 1 else "") for i, e in enumerate(entries))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def main() -> None:
    parser = argparse.ArgumentParser(description="Generate the bundled point-target correlator table")
    parser.add_argument("--output", type=Path, default=DEFAULT_OUTPUT, help="Target file")
    args = parser.parse_args()

    blocks, entries = build_table()
    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_text(render(blocks, entries), encoding="utf-8")
    print(f"Wrote {len(entries)} entries in {len(blocks)} blocks to {args.output}")


if __name__ == "__main__":
    main()
