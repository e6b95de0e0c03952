"""Per-(device, property) cache state: DELTA/ERROR control and counters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .adapters import DataTypeAdapter, get_adapter
from .errors import InsufficientData
from .models import CacheModel, make_model

SERVED_CACHE = "Cache"
SERVED_DEVICE = "Device"

REENABLE_AFTER = 3  # consecutive within-tolerance device queries


@dataclass
class LookupResult:
    value: object
    served_by: str            # Cache | Device
    prediction: object = None  # what the model would have said, when available


@dataclass
class CacheMetrics:
    lookups: int
    hits: int
    misses: int
    query_reduction: float
    error_samples: list[float]


@dataclass
class CacheState:
    """One shared cache per (deviceId, property), across all clients.

    ``delta`` is the maximum age (ms) of the last real device query before
    the cache is bypassed; None disables serving from cache entirely.
    ``error_tolerance`` is compared against the adapter diff between each
    device result and the model's prediction for the same instant; None
    skips the check.
    """

    device_id: str
    prop: str
    model: CacheModel
    adapter: DataTypeAdapter
    delta: int | None = None
    error_tolerance: float | None = None
    reenable_after: int = REENABLE_AFTER
    last_device_query: int | None = None
    prediction_enabled: bool = True
    consecutive_accurate: int = 0
    hits: int = 0
    misses: int = 0
    error_samples: list[float] = field(default_factory=list)

    def expiration_time(self) -> int | None:
        """First instant at which the cache must be bypassed."""
        if self.last_device_query is None or self.delta is None:
            return None
        return self.last_device_query + self.delta

    def can_serve(self, time_ms: int) -> bool:
        expiry = self.expiration_time()
        return (
            expiry is not None
            and self.prediction_enabled
            and self.model.has_min_points()
            and time_ms < expiry
        )

    def lookup(self, time_ms: int, query_device: Callable[[], object]) -> LookupResult:
        """Serve from the model when permitted, else query the device.

        Device queries double as accuracy probes: the fresh result is
        compared with what the model would have predicted, and prediction
        is disabled/re-enabled per the ERROR rule. Device errors propagate
        and leave the state untouched.
        """
        if self.can_serve(time_ms):
            value = self.model.predict_value(time_ms)
            self.hits += 1
            return LookupResult(value, SERVED_CACHE, prediction=value)

        prediction = None
        had_prediction = False
        if self.model.has_min_points():
            try:
                prediction = self.model.predict_value(time_ms)
                had_prediction = True
            except InsufficientData:
                pass

        value = query_device()

        self.model.add_point(time_ms, value)
        self.last_device_query = time_ms
        self.misses += 1

        if had_prediction and self.error_tolerance is not None:
            if self.adapter.diff(value, prediction) > self.error_tolerance:
                self.prediction_enabled = False
                self.consecutive_accurate = 0
            else:
                self.consecutive_accurate += 1
                if self.consecutive_accurate >= self.reenable_after:
                    self.prediction_enabled = True
        return LookupResult(value, SERVED_DEVICE, prediction=prediction)

    def metrics(self) -> CacheMetrics:
        total = self.hits + self.misses
        reduction = self.hits / total if total else 0.0
        return CacheMetrics(total, self.hits, self.misses, reduction,
                            list(self.error_samples))


def make_state(device_id: str, prop: str, datatype: str,
               model_name: str = "Consistent", model_params: dict | None = None,
               delta: int | None = None, error_tolerance: float | None = None) -> CacheState:
    return CacheState(
        device_id=device_id,
        prop=prop,
        model=make_model(model_name, model_params),
        adapter=get_adapter(datatype),
        delta=delta,
        error_tolerance=error_tolerance,
    )


class CacheManager:
    """Keyed store of CacheStates; one per (deviceId, property)."""

    def __init__(self):
        self._states: dict[tuple[str, str], CacheState] = {}

    def state_for(self, device_id: str, prop: str, datatype: str,
                  model_name: str = "Consistent", model_params: dict | None = None,
                  delta: int | None = None, error_tolerance: float | None = None) -> CacheState:
        """Fetch the shared state, creating it on first use.

        DELTA/ERROR come from each SENSE statement, so they are refreshed
        on every call; the model and its accumulated window are shared.
        """
        key = (device_id, prop)
        state = self._states.get(key)
        if state is None:
            state = make_state(device_id, prop, datatype, model_name, model_params,
                               delta, error_tolerance)
            self._states[key] = state
        else:
            state.delta = delta
            state.error_tolerance = error_tolerance
        return state

    def states(self) -> list[CacheState]:
        return list(self._states.values())

    def drop_device(self, device_id: str) -> None:
        for key in [k for k in self._states if k[0] == device_id]:
            del self._states[key]
