"""Exception hierarchy shared across the package."""

from __future__ import annotations


class WdaError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(WdaError, ValueError):
    """An argument falls outside its documented range (e.g. negative tolerance)."""


class DimensionError(WdaError, ValueError):
    """Array shapes are incompatible.

    Carries the offending shapes so callers can report them without parsing
    the message.
    """

    def __init__(self, message: str, *, expected=None, actual=None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class DomainError(WdaError, ValueError):
    """A numeric input violates a mathematical precondition (e.g. v <= 0)."""


class ParseError(WdaError, ValueError):
    """A data file could not be parsed. Carries row/column indices when known."""

    def __init__(self, message: str, *, row: int | None = None,
                 column: int | None = None, path: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column
        self.path = path


class NumericError(WdaError, RuntimeError):
    """A numerical routine broke down. Carries condition diagnostics when known."""

    def __init__(self, message: str, *, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
