"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError → 2, NumericError → 3,
everything argument/usage-shaped → 1.
"""


class DataError(Exception):
    """Invalid input data (files, records, molecules)."""


class ParseError(DataError):
    """Malformed XYZ or JSONL content; message carries the line number."""


class DatasetError(DataError):
    """Structurally valid records that violate dataset-level invariants."""


class ScheduleError(ValueError):
    """Cutoffs/window/step that cannot form a valid radius schedule."""


class ShapeError(ValueError):
    """Tensor shape mismatch; message names both shapes."""


class RoutingError(ValueError):
    """Degenerate routing input (e.g. every logit masked)."""


class LossError(ValueError):
    """Loss cannot be formed (all-masked batch, non-finite component)."""


class GradCheckError(RuntimeError):
    """Finite-difference verification could not be carried out."""


class NumericError(RuntimeError):
    """Non-finite values during training; carries diagnostics."""
