"""Exception hierarchy for uplift-forest.

Every error carries the CLI exit code it maps to:
2 input error, 3 compatibility error, 4 estimation error.
"""
from typing import Optional


class UpliftError(Exception):
    """Base class for all pipeline errors."""
    exit_code: int = 1

    def to_dict(self) -> dict:
        """Structured form written to stderr by the CLI."""
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


# Input errors (exit 2)
class InputError(UpliftError, ValueError):
    exit_code = 2


class SchemaError(InputError):
    """Missing or inconsistent columns."""


class ParseError(InputError):
    """Non-numeric or empty value in a numeric column."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        super().__init__(message)
        self.row = row
        self.column = column

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["row"] = self.row
        data["column"] = self.column
        return data


class LabelingError(InputError):
    """Unknown treatment or category label."""


class SizingError(InputError):
    """Too few units for the requested operation."""


class CompositionError(InputError):
    """A treatment subset lacks the control or treated group."""


class PreconditionError(InputError):
    """Operation called on data it does not support."""


class ConfigError(InputError):
    """Invalid run configuration."""


# Compatibility errors (exit 3)
class CompatibilityError(UpliftError, ValueError):
    exit_code = 3


# Estimation errors (exit 4)
class EstimationError(UpliftError):
    exit_code = 4


class OverlapError(EstimationError):
    """Propensity estimates saturate at 0 or 1 for too many units."""


class FitError(EstimationError):
    """Forest cannot be fitted on the given data."""


class EvaluationError(EstimationError):
    """Evaluation board cannot be cumulated."""
