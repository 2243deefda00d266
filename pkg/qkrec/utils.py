"""
Shared utilities: configuration, logging setup and exact JSON I/O.

Configuration is read from environment variables (optionally via a .env
file); JSON files are parsed with syntax errors mapped to SpecError so the
CLI can report line and column.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv

from qkrec.errors import SpecError

logger = logging.getLogger(__name__)

# Bundled data directory (point-target table, golden run spec)
DATA_DIR = Path(__file__).parent / "data"
BUNDLED_TABLE = DATA_DIR / "point_table.json"
GOLDEN_SPEC = DATA_DIR / "golden_spec.json"

VALID_Y_SIGNS = ("-", "+")
VALID_A_INSERTIONS = ("level", "base")
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def load_config() -> Dict[str, str]:
    """
    Load configuration from environment variables.

    Reads from .env file if present, otherwise uses defaults.
    Environment variables:
        - QKREC_TABLE_PATH: Table search path (os.pathsep separated)
        - QKREC_DEFAULT_ORDER: Truncation order used by `qkrec check`
        - QKREC_Y_SIGN: Sign in front of the y_r correction ('-' or '+')
        - QKREC_CYCLE_WEIGHT: Apply r^-l weights inside double brackets ('true' or 'false')
        - QKREC_A_INSERTION: Jet inserted in A_r ('level' or 'base')
        - QKREC_MAX_RESUM_TERMS: Sample bound for geometric-slot resummation
        - QKREC_MAX_WORKERS: Worker processes for check suites
        - QKREC_LOG_LEVEL: Logging level name

    Returns:
        Dict with keys: table_path, default_order, y_sign, cycle_weight,
        a_insertion, max_resum_terms, max_workers, log_level
    """
    # Load .env file if it exists (silent if missing)
    load_dotenv()

    return {
        "table_path": os.getenv("QKREC_TABLE_PATH", ""),
        "default_order": os.getenv("QKREC_DEFAULT_ORDER", "2"),
        "y_sign": os.getenv("QKREC_Y_SIGN", "-"),
        "cycle_weight": os.getenv("QKREC_CYCLE_WEIGHT", "true"),
        "a_insertion": os.getenv("QKREC_A_INSERTION", "level"),
        "max_resum_terms": os.getenv("QKREC_MAX_RESUM_TERMS", "40"),
        "max_workers": os.getenv("QKREC_MAX_WORKERS", "1"),
        "log_level": os.getenv("QKREC_LOG_LEVEL", "WARNING"),
    }


def parse_bool(value: Union[str, bool]) -> bool:
    """
    Parse a boolean configuration value.

    Raises:
        ValueError: If the value is not a recognised boolean string
    """
    if isinstance(value, bool):
        return value
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected 'true' or 'false', got: {value}")


def validate_toggles(y_sign: str, a_insertion: str, max_resum_terms: int) -> None:
    """
    Validate reconstruction toggles.

    Raises:
        ValueError: If any toggle is invalid
    """
    if y_sign not in VALID_Y_SIGNS:
        raise ValueError(f"y_sign must be '-' or '+', got: {y_sign}")
    if a_insertion not in VALID_A_INSERTIONS:
        raise ValueError(f"a_insertion must be 'level' or 'base', got: {a_insertion}")
    if not isinstance(max_resum_terms, int) or max_resum_terms < 8 or max_resum_terms > 500:
        raise ValueError(f"max_resum_terms must be between 8 and 500, got: {max_resum_terms}")


def setup_logging(level: str = "WARNING") -> None:
    """Configure root logging to stderr once (CLI entry points only)."""
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ValueError(f"unknown log level: {level}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT)
    logging.getLogger().setLevel(numeric)


def resolve_table_path(path: str, search_path: Optional[str] = None) -> Path:
    """
    Locate a table file.

    Args:
        path: Path as written in a run spec
        search_path: Directories to try, os.pathsep separated (default: QKREC_TABLE_PATH)

    Returns:
        Existing Path

    Raises:
        FileNotFoundError: If the file exists nowhere on the search path
    """
    candidate = Path(path)
    if candidate.is_file():
        return candidate
    if search_path is None:
        search_path = load_config()["table_path"]
    for directory in filter(None, search_path.split(os.pathsep)):
        found = Path(directory) / path
        if found.is_file():
            return found
    raise FileNotFoundError(f"table not found: {path} (search path: {search_path!r})")


def load_json_file(path: Union[str, Path]) -> Any:
    """
    Read a JSON document.

    Raises:
        FileNotFoundError: If the file does not exist
        SpecError: On JSON syntax errors, with line and column
    """
    text = Path(path).read_text(encoding="utf-8")
    return load_json_text(text, source=str(path))


def load_json_text(text: str, source: str = "<string>") -> Any:
    """Parse JSON text, mapping syntax errors to SpecError."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"malformed JSON in {source}: {e.msg}", line=e.lineno, column=e.colno) from e


def dump_json(data: Any) -> str:
    """Deterministic JSON text (sorted keys, two-space indent, trailing newline)."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(data: Any, path: Union[str, Path]) -> None:
    """Write deterministic JSON, creating parent directories."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dump_json(data), encoding="utf-8")
