"""Cache-layer error types."""

from __future__ import annotations


class CacheError(Exception):
    pass


class NonMonotonicTime(CacheError):
    """A point was added at or before the model's latest observation time."""


class InsufficientData(CacheError):
    """The model has fewer observations than its minimum to predict."""


class DimensionMismatch(CacheError):
    """Two values of the same datatype have incompatible shapes."""
