"""
Test package for qkrec.

Shared paths to the bundled data files.
"""

from pathlib import Path

DATA_DIR = Path(__file__).parent.parent / "qkrec" / "data"
POINT_TABLE = DATA_DIR / "point_table.json"
GOLDEN_SPEC = DATA_DIR / "golden_spec.json"
GOLDEN_SPEC_TWO_CYCLES = DATA_DIR / "golden_spec_two_cycles.json"
