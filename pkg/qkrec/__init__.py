"""
qkrec - exact genus-1 reconstruction of permutation-equivariant quantum K-invariants.

Arithmetic is exact over Q(zeta_12) with truncated power series; correlators
come from JSON tables and the genus-0 point recursion.
"""

from qkrec.correlators import CorrelatorBackend, CorrelatorTable, validate_table
from qkrec.errors import (
    ConvergenceError,
    MissingEntryError,
    NonUnitError,
    PoleError,
    QkrecError,
    ResummationError,
    SpecError,
)
from qkrec.reconstruct import F1Report, ReconstructionInput, compute_tau, reconstruct_f1
from qkrec.ring import CycloRational, Series, SeriesRingConfig

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "CorrelatorBackend",
    "CorrelatorTable",
    "CycloRational",
    "MissingEntryError",
    "NonUnitError",
    "PoleError",
    "QkrecError",
    "ReconstructionInput",
    "ResummationError",
    "Series",
    "SeriesRingConfig",
    "SpecError",
    "F1Report",
    "compute_tau",
    "reconstruct_f1",
    "validate_table",
]
