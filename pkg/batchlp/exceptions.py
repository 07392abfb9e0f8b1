from __future__ import annotations

from typing import List, TYPE_CHECKING

if TYPE_CHECKING:
    from batchlp.model import Diagnostic


class BatchLpException(Exception):
    """The catch all for any batchlp exceptions which should be catchable."""


class InvalidMatrix(BatchLpException):
    """The sparse matrix data is invalid for some reason."""


class DimensionMismatch(InvalidMatrix):
    """The operand shapes of a product or projection do not agree."""


class ZeroMatrix(InvalidMatrix):
    """The operation is undefined for a matrix with no nonzero entries."""


class InvalidProblem(BatchLpException):
    """
    The problem data failed validation.

    The full list of diagnostics is kept on the exception so callers can
    report every issue rather than just the first.
    """

    def __init__(self, message: str, diagnostics: List[Diagnostic] = None):
        super().__init__(message)
        self.message = message
        self.diagnostics = diagnostics or []

    def __str__(self):
        if not self.diagnostics:
            return self.message

        details = "; ".join(str(d) for d in self.diagnostics)
        return f"{self.message}: {details}"


class InvalidOverride(InvalidProblem):
    """A column override references invalid indices or inverts an interval."""


class InvalidRequest(BatchLpException):
    """A strong branching request breaks its invariants."""


class StepSizeError(BatchLpException):
    """
    The residual metric stopped being positive definite.

    This only happens when eta * ||A||_2 >= 1, i.e. the norm estimate was wrong.
    """

    def __init__(self, value: float):
        self.value = value

    def __str__(self):
        return f"negative residual quadratic form {self.value!r}, step size too large"


class MpsFormatError(BatchLpException):
    """The MPS input could not be parsed."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        self.message = message

    def __str__(self):
        return f"line={self.line_number}, message={self.message!r}"


class OracleTooLarge(BatchLpException):
    """The instance is beyond the enumeration budget of the reference oracle."""
