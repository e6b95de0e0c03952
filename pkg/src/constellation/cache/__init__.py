"""Predictive per-device cache for SENSE requests."""

from .adapters import (
    DataTypeAdapter,
    diff_cartesian,
    diff_discrete,
    diff_double,
    diff_image,
    get_adapter,
    known_datatypes,
    register_adapter,
)
from .errors import CacheError, DimensionMismatch, InsufficientData, NonMonotonicTime
from .models import (
    CacheModel,
    Consistent,
    Cyclic,
    LinearRegression,
    PolynomialRegression,
    make_model,
    register_model,
)
from .state import (
    SERVED_CACHE,
    SERVED_DEVICE,
    CacheManager,
    CacheMetrics,
    CacheState,
    LookupResult,
    make_state,
)

__all__ = [
    "DataTypeAdapter", "diff_cartesian", "diff_discrete", "diff_double", "diff_image",
    "get_adapter", "known_datatypes", "register_adapter",
    "CacheError", "DimensionMismatch", "InsufficientData", "NonMonotonicTime",
    "CacheModel", "Consistent", "Cyclic", "LinearRegression", "PolynomialRegression",
    "make_model", "register_model",
    "SERVED_CACHE", "SERVED_DEVICE", "CacheManager", "CacheMetrics", "CacheState",
    "LookupResult", "make_state",
]
