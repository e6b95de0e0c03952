"""Device registry: registration, DevSet resolution, prioritized selection,
and the sense/actuate serving path with energy and sleep bookkeeping."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .drivers import DeviceDriver, ScriptedDriver
from .energy import EnergyExhausted, EnergyState, energy_state_from_manifest
from .manifest import METERED, NON_ENERGY_AWARE, SLEEPY, DeviceManifest

SLEPT = "slept"
WOKEN = "woken"
UNCHANGED = "unchanged"


class RegistrationError(Exception):
    pass


class EmptySet(Exception):
    """No registered device matches the requested devtype and predicates."""


class UnknownDevice(Exception):
    pass


@dataclass
class DevSet:
    """An ordered set of functionally equivalent devices."""

    name: str
    members: list[str]


@dataclass
class Selection:
    device_ids: list[str]
    short: bool  # true when fewer than the requested cardinality existed


@dataclass
class ServeResult:
    value: object
    latency_ms: int


@dataclass
class _Entry:
    manifest: DeviceManifest
    driver: DeviceDriver
    energy: EnergyState | None
    asleep: bool = False
    last_used_ms: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class DeviceRegistry:
    """Thread-safe registry of virtual devices on one node."""

    def __init__(self):
        self._entries: dict[str, _Entry] = {}
        self._lock = threading.RLock()

    # --- registration -----------------------------------------------------

    def register(self, manifest: DeviceManifest, driver: DeviceDriver | None = None) -> None:
        with self._lock:
            if manifest.device_id in self._entries:
                raise RegistrationError(f"deviceId {manifest.device_id!r} already registered")
            if driver is None:
                driver = ScriptedDriver(manifest)
            self._entries[manifest.device_id] = _Entry(
                manifest=manifest,
                driver=driver,
                energy=energy_state_from_manifest(manifest),
            )

    def unregister(self, device_id: str) -> DeviceManifest:
        with self._lock:
            entry = self._entries.pop(device_id, None)
        if entry is None:
            raise UnknownDevice(device_id)
        return entry.manifest

    def manifest(self, device_id: str) -> DeviceManifest:
        entry = self._entries.get(device_id)
        if entry is None:
            raise UnknownDevice(device_id)
        return entry.manifest

    def driver(self, device_id: str) -> DeviceDriver:
        entry = self._entries.get(device_id)
        if entry is None:
            raise UnknownDevice(device_id)
        return entry.driver

    def owner_of(self, device_id: str) -> str | None:
        entry = self._entries.get(device_id)
        return entry.manifest.owner if entry else None

    def device_ids(self) -> list[str]:
        return sorted(self._entries)

    def manifests(self) -> list[DeviceManifest]:
        with self._lock:
            return [e.manifest for e in self._entries.values()]

    # --- resolution and selection ------------------------------------------

    def resolve_devset(self, devtype: str, where=()) -> DevSet:
        """All registered devices of `devtype` matching every predicate."""
        with self._lock:
            matches = []
            for entry in self._entries.values():
                m = entry.manifest
                if m.devtype != devtype:
                    continue
                if all(m.attributes.get(k) == v for k, v in where):
                    matches.append(m.device_id)
        if not matches:
            raise EmptySet(f"no device matches {devtype} {list(where)}")
        ordered = sorted(matches, key=self._priority_key)
        return DevSet(devtype, ordered)

    def _priority_key(self, device_id: str):
        entry = self._entries[device_id]
        cls = entry.manifest.energy_class
        if cls == NON_ENERGY_AWARE:
            rank, level = 0, 0.0
        elif cls == METERED:
            rank, level = 1, -(entry.energy.remaining if entry.energy else 0.0)
        else:
            rank, level = 2, 1.0 if entry.asleep else 0.0
        return (rank, level, device_id)

    def select_device(self, devset: DevSet, k: int = 1) -> Selection:
        """First k available devices under the priority order."""
        available = [
            d for d in sorted(devset.members, key=self._priority_key)
            if not self._is_exhausted(d)
        ]
        return Selection(available[:k], short=len(available) < k)

    def _is_exhausted(self, device_id: str) -> bool:
        entry = self._entries.get(device_id)
        return bool(entry and entry.energy and entry.energy.exhausted)

    # --- energy and sleep ---------------------------------------------------

    def record_energy_event(self, device_id: str, op: str, now_ms: int,
                            observed: float | None = None) -> EnergyState:
        entry = self._entries.get(device_id)
        if entry is None:
            raise UnknownDevice(device_id)
        if entry.energy is None:
            raise ValueError(f"{device_id} is not a Metered device")
        with entry.lock:
            entry.energy.record_event(op, now_ms, observed)
        return entry.energy

    def energy_state(self, device_id: str) -> EnergyState | None:
        entry = self._entries.get(device_id)
        if entry is None:
            raise UnknownDevice(device_id)
        return entry.energy

    def manage_sleep(self, device_id: str, now_ms: int, pending_task: bool = False) -> str:
        """Duty-cycle step for one Sleepy device."""
        entry = self._entries.get(device_id)
        if entry is None:
            raise UnknownDevice(device_id)
        if entry.manifest.energy_class != SLEEPY:
            return UNCHANGED
        with entry.lock:
            if entry.asleep:
                if pending_task:
                    entry.asleep = False
                    entry.last_used_ms = now_ms
                    return WOKEN
                return UNCHANGED
            if not pending_task and now_ms - entry.last_used_ms > entry.manifest.idle_timeout_ms:
                entry.asleep = True
                return SLEPT
            return UNCHANGED

    def sleep_tick(self, now_ms: int) -> list[str]:
        """Run the idle check for every Sleepy device; returns slept ids."""
        slept = []
        for device_id in self.device_ids():
            if self.manage_sleep(device_id, now_ms) == SLEPT:
                slept.append(device_id)
        return slept

    def is_asleep(self, device_id: str) -> bool:
        entry = self._entries.get(device_id)
        if entry is None:
            raise UnknownDevice(device_id)
        return entry.asleep

    # --- serving ------------------------------------------------------------

    def _prepare(self, entry: _Entry, now_ms: int) -> int:
        """Wake if needed; returns extra latency. Caller holds entry.lock."""
        extra = 0
        if entry.manifest.energy_class == SLEEPY and entry.asleep:
            entry.asleep = False
            extra = entry.manifest.wake_latency_ms
        entry.last_used_ms = now_ms
        return extra

    def sense(self, device_id: str, prop: str, now_ms: int,
              observed_cost: float | None = None) -> ServeResult:
        """Query the device for a property value, with energy/sleep effects."""
        entry = self._entries.get(device_id)
        if entry is None:
            raise UnknownDevice(device_id)
        with entry.lock:
            if entry.energy is not None and entry.energy.exhausted:
                raise EnergyExhausted(device_id)
            extra = self._prepare(entry, now_ms)
            if entry.energy is not None:
                entry.energy.record_event("Sense", now_ms, observed_cost)
            value = entry.driver.sense(prop, now_ms)
        return ServeResult(value, entry.driver.latency_ms + extra)

    def actuate(self, device_id: str, action: str, params: dict[str, str],
                now_ms: int, observed_cost: float | None = None) -> ServeResult:
        entry = self._entries.get(device_id)
        if entry is None:
            raise UnknownDevice(device_id)
        with entry.lock:
            if entry.energy is not None and entry.energy.exhausted:
                raise EnergyExhausted(device_id)
            extra = self._prepare(entry, now_ms)
            if entry.energy is not None:
                entry.energy.record_event(action, now_ms, observed_cost)
            entry.driver.actuate(action, params, now_ms)
        return ServeResult(None, entry.driver.latency_ms + extra)
