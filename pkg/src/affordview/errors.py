"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class AffordviewError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AffordviewError, ValueError):
    """Input data or configuration violates a documented contract.

    ``row`` carries the 1-based source line number when the error came from
    a tabular document.
    """

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DegenerateError(AffordviewError, ArithmeticError):
    """A numerical quantity is undefined for the given data (zero spread, etc.)."""


class MissingModelError(ValidationError):
    """A task plan references an affordance with no learned manifold set."""
