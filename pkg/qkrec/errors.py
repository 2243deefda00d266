"""
Exception types raised by the reconstruction engine.

Every error derives from QkrecError so callers (the CLI in particular) can
catch engine failures without swallowing programming errors.
"""

from typing import Iterable, List, Optional


class QkrecError(Exception):
    """Base class for all engine errors."""


class ConfigMismatchError(QkrecError, ValueError):
    """Two series (or vectors) built over different rings were combined."""


class NonUnitError(QkrecError, ValueError):
    """Inversion or logarithm requested for an element that is not a unit."""


class PoleError(QkrecError, ValueError):
    """A rational function was evaluated at a pole, or a pole cannot be represented."""


class MissingEntryError(QkrecError, KeyError):
    """
    One or more correlator table entries are missing.

    Attributes:
        keys: Sorted canonical keys of every missing entry
    """

    def __init__(self, keys: Iterable[str]):
        self.keys: List[str] = sorted(set(keys))
        super().__init__(self.keys)

    def __str__(self) -> str:
        shown = ", ".join(self.keys[:10])
        more = f" (+{len(self.keys) - 10} more)" if len(self.keys) > 10 else ""
        return f"missing table entries: {shown}{more}"


class ResummationError(QkrecError, RuntimeError):
    """A geometric-slot sequence did not settle into a polynomial pattern."""


class ConvergenceError(QkrecError, RuntimeError):
    """The tau fixed-point iteration did not converge."""


class SpecError(QkrecError, ValueError):
    """
    Malformed run spec or table file.

    Attributes:
        line: 1-based line of a JSON syntax error, if any
        column: 1-based column of a JSON syntax error, if any
    """

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
