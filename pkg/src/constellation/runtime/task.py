"""Tasks compiled from queries and the results their firings produce."""

from __future__ import annotations

from dataclasses import dataclass, field

from constellation.device import DevSet

ACTIVE = "Active"
CANCELLED = "Cancelled"
COMPLETED = "Completed"

KIND_SENSE = "Sense"
KIND_ACTUATE = "Actuate"
KIND_EVENT = "Event"

SERVED_DEVICE = "Device"
SERVED_CACHE = "Cache"
SERVED_GATEWAY = "Gateway"

OUTCOME_VALUE = "Value"
OUTCOME_ACK = "Ack"
OUTCOME_ERROR = "Error"


@dataclass
class DeviceOutcome:
    device_id: str
    kind: str                 # Value | Ack | Error
    value: object = None      # the sensed value, or the error message
    served_by: str = SERVED_DEVICE
    latency_ms: int = 0

    def to_wire(self) -> dict:
        doc = {"deviceId": self.device_id, "kind": self.kind,
               "servedBy": self.served_by, "latencyMs": self.latency_ms}
        # A privacy-blocked value never reaches the wire at all.
        if self.kind != OUTCOME_ERROR or self.value is not None:
            doc["value"] = self.value
        return doc


@dataclass
class TaskResult:
    task_id: str
    fired_at_ms: int
    per_device: list[DeviceOutcome] = field(default_factory=list)
    deadline_met: bool = True
    short_set: bool = False

    def to_wire(self) -> dict:
        return {
            "taskId": self.task_id,
            "firedAtMs": self.fired_at_ms,
            "perDevice": [o.to_wire() for o in self.per_device],
            "deadlineMet": self.deadline_met,
            "shortSet": self.short_set,
        }


@dataclass
class Task:
    task_id: str
    client_id: str
    kind: str                  # Sense | Actuate | Event
    spec: object               # the corresponding *Spec from the parser
    devset: DevSet | None      # None for Event tasks (resolved per trigger)
    period_ms: int             # 0 = one-shot
    deadline_ms: int           # 0 = none
    start_ms: int
    next_fire_ms: int
    status: str = ACTIVE
    fire_count: int = 0
    last_condition: bool = False  # Event condition edge detection

    def schedule_next(self, eval_tick_ms: int | None = None) -> None:
        """Advance next_fire without accumulating drift."""
        self.fire_count += 1
        if self.kind == KIND_EVENT and eval_tick_ms is not None:
            self.next_fire_ms = self.next_fire_ms + eval_tick_ms
        elif self.period_ms > 0:
            self.next_fire_ms = self.start_ms + self.fire_count * self.period_ms
        else:
            self.status = COMPLETED
