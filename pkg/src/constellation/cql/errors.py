"""Error types raised by the CQL front end."""

from __future__ import annotations


class CqlError(Exception):
    """Base class for all CQL front-end errors."""


class ParseError(CqlError):
    """Lexical or grammatical error, with a 1-based character offset."""

    def __init__(self, message: str, offset: int, expected: set[str] | None = None):
        self.offset = offset
        self.expected = expected or set()
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += " (expected " + ", ".join(sorted(self.expected)) + ")"
        super().__init__(detail)


class ValidationError(CqlError):
    """Statement is well-formed but semantically invalid."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} at offset {offset}"
        super().__init__(message)
