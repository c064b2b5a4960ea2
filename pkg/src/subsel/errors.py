"""Exception taxonomy shared across the package.

Configuration-style failures (bad arguments, malformed files, degenerate
inputs) derive from ValueError; numerical failures (singularity, separation,
exhausted iteration budgets) derive from ArithmeticError / RuntimeError.
The CLI maps the two families to distinct exit codes.
"""

from __future__ import annotations


class SubselError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SubselError, ValueError):
    """An argument violates an operation's contract."""


class ConfigError(SubselError, ValueError):
    """Bad configuration: unknown names, malformed files, missing columns."""


class ParseError(SubselError, ValueError):
    """A cell could not be parsed (strict ingestion only)."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyDatasetError(SubselError, ValueError):
    """No usable data rows remain after ingestion."""


class DegenerateColumnError(SubselError, ValueError):
    """A column is constant where variation is required (e.g. standardize)."""


class SingularMatrixError(SubselError, ArithmeticError):
    """A matrix that must be invertible is singular or too ill-conditioned.

    Carries the offending smallest eigenvalue when known; never silently
    regularized because downstream optimality verdicts would be corrupted.
    """

    def __init__(
        self,
        message: str,
        smallest_eigenvalue: float | None = None,
        iteration: int | None = None,
    ):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue
        self.iteration = iteration


class SeparationError(SubselError, ArithmeticError):
    """Logistic fit diverged: coefficients grow without bound."""


class ExhaustionError(SubselError, RuntimeError):
    """An iterative procedure ran out of rows or iterations."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration
