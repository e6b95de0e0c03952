"""Datatype diff adapters: a nonnegative, symmetric distance per datatype."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch


def diff_double(a, b) -> float:
    """Absolute difference of two scalars."""
    return abs(float(a) - float(b))


def diff_cartesian(a, b) -> float:
    """Euclidean distance between two coordinate tuples."""
    a = tuple(a)
    b = tuple(b)
    if len(a) != len(b):
        raise DimensionMismatch(f"coordinate arity {len(a)} vs {len(b)}")
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def diff_image(a, b) -> float:
    """Sum of absolute per-channel RGB differences over all pixels."""
    arr_a = np.asarray(a, dtype=np.int64)
    arr_b = np.asarray(b, dtype=np.int64)
    if arr_a.shape != arr_b.shape:
        raise DimensionMismatch(f"image shape {arr_a.shape} vs {arr_b.shape}")
    return float(np.abs(arr_a - arr_b).sum())


def diff_discrete(a, b) -> float:
    """0 when equal, 1 otherwise; used for booleans and free-form strings."""
    return 0.0 if a == b else 1.0


@dataclass(frozen=True)
class DataTypeAdapter:
    name: str
    diff: Callable[[object, object], float]


_ADAPTERS: dict[str, DataTypeAdapter] = {}


def register_adapter(name: str, diff: Callable[[object, object], float]) -> DataTypeAdapter:
    adapter = DataTypeAdapter(name, diff)
    _ADAPTERS[name] = adapter
    return adapter


def get_adapter(name: str) -> DataTypeAdapter:
    try:
        return _ADAPTERS[name]
    except KeyError:
        raise KeyError(f"no diff adapter registered for datatype {name!r}") from None


def known_datatypes() -> set[str]:
    return set(_ADAPTERS)


register_adapter("Double", diff_double)
register_adapter("CartesianCoordinates", diff_cartesian)
register_adapter("Image", diff_image)
register_adapter("Discrete", diff_discrete)
