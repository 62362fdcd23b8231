"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` (CLI exit code 2);
everything numerical derives from :class:`NumericalError` (exit code 3).
"""

from __future__ import annotations


class AtlasError(Exception):
    """Base class for all package errors."""


class ValidationError(AtlasError, ValueError):
    """Invalid user input. ``field`` names the offending parameter when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ParseError(ValidationError):
    def __init__(self, message: str, row: int):
        super().__init__(f"row {row}: {message}")
        self.row = row


class SchemaError(ValidationError):
    pass


class UnsupportedOperationError(AtlasError):
    pass


class NumericalError(AtlasError):
    pass


class InsufficientDataError(NumericalError):
    pass


class DegenerateStarError(NumericalError):
    def __init__(self, message: str, gamma: float):
        super().__init__(message)
        self.gamma = gamma


class CoverageError(NumericalError):
    """Raised when points (or spline shifts) cannot be covered."""

    def __init__(self, message: str, orphans=()):
        super().__init__(message)
        self.orphans = list(orphans)


class InfeasibleMomentsError(NumericalError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class InfeasibleConstraintsError(NumericalError):
    def __init__(self, message: str, duplicates=()):
        super().__init__(message)
        self.duplicates = list(duplicates)


class OutOfTubeError(NumericalError):
    def __init__(self, message: str, coords):
        super().__init__(message)
        self.coords = coords


class OutOfCoverageError(NumericalError):
    pass
