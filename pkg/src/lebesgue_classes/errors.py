"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: input problems exit 2, resource caps
exit 3, invariant or numeric failures exit 4.
"""

from __future__ import annotations


class LebesgueError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InputError(LebesgueError):
    """The caller supplied something the library cannot accept."""

    exit_code = 2


class DomainError(InputError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ArgumentError(InputError, ValueError):
    """An argument is malformed or violates a stated precondition."""


class UnsupportedInputError(InputError):
    """The input is well formed but outside the supported function class."""


class StepRejectedError(InputError):
    """A pullback step was applied without its preconditions holding."""

    def __init__(self, step, clause: str):
        super().__init__(f"{step} rejected: {clause}")
        self.step = step
        self.clause = clause


class ParseError(InputError):
    """An instance document failed validation at a JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class ResourceError(LebesgueError):
    """A configured cap (configurations, subdivision depth, budget) was hit."""

    exit_code = 3

    def __init__(self, message: str, count: int | None = None):
        super().__init__(message)
        self.count = count


class InvariantError(LebesgueError):
    """An internal consistency check failed."""

    exit_code = 4


class NumericError(InvariantError):
    """A floating point computation produced a non-finite value."""
