"""Runtime engine: task compilation, scheduling, and execution."""

from .clock import Clock, SimClock, SystemClock
from .engine import GatewayUnavailable, RuntimeEngine, SubmitOutcome, UnknownDevSet
from .task import (
    ACTIVE,
    CANCELLED,
    COMPLETED,
    KIND_ACTUATE,
    KIND_EVENT,
    KIND_SENSE,
    OUTCOME_ACK,
    OUTCOME_ERROR,
    OUTCOME_VALUE,
    SERVED_CACHE,
    SERVED_DEVICE,
    SERVED_GATEWAY,
    DeviceOutcome,
    Task,
    TaskResult,
)

__all__ = [
    "Clock", "SimClock", "SystemClock",
    "GatewayUnavailable", "RuntimeEngine", "SubmitOutcome", "UnknownDevSet",
    "ACTIVE", "CANCELLED", "COMPLETED",
    "KIND_ACTUATE", "KIND_EVENT", "KIND_SENSE",
    "OUTCOME_ACK", "OUTCOME_ERROR", "OUTCOME_VALUE",
    "SERVED_CACHE", "SERVED_DEVICE", "SERVED_GATEWAY",
    "DeviceOutcome", "Task", "TaskResult",
]
