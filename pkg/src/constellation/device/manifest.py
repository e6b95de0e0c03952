"""Device manifest loading and validation.

A manifest is a JSON document, one per device, with top-level keys
deviceId, devtype, attributes, properties, actions, energyClass,
energyProfile, batteryCapacity, cacheModel, owner, idleTimeoutMs,
wakeLatencyMs, simulation. Unknown keys are rejected. The full schema is
documented in docs/manifest-schema.md with shipped examples.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from constellation.cache import known_datatypes

NON_ENERGY_AWARE = "NonEnergyAware"
METERED = "Metered"
SLEEPY = "Sleepy"
ENERGY_CLASSES = (NON_ENERGY_AWARE, METERED, SLEEPY)

STATIC = "Static"
DYNAMIC = "Dynamic"

DEFAULT_IDLE_TIMEOUT_MS = 30_000
DEFAULT_WAKE_LATENCY_MS = 500

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")

_TOP_LEVEL_KEYS = {
    "deviceId", "devtype", "attributes", "properties", "actions",
    "energyClass", "energyProfile", "batteryCapacity", "cacheModel",
    "owner", "idleTimeoutMs", "wakeLatencyMs", "simulation",
}


class ManifestError(Exception):
    """Raised with the name of the offending manifest field."""


@dataclass(frozen=True)
class PropertyDecl:
    name: str
    datatype: str
    units: str = ""


@dataclass(frozen=True)
class ActionDecl:
    name: str
    params: tuple[str, ...] = ()


@dataclass
class DeviceManifest:
    device_id: str
    devtype: str
    attributes: dict[str, str] = field(default_factory=dict)
    properties: list[PropertyDecl] = field(default_factory=list)
    actions: list[ActionDecl] = field(default_factory=list)
    energy_class: str = NON_ENERGY_AWARE
    profile_kind: str | None = None          # Static | Dynamic, Metered only
    static_costs: dict[str, float] = field(default_factory=dict)
    battery_capacity: float | None = None
    cache_model: str | None = None
    cache_params: dict = field(default_factory=dict)
    owner: str | None = None
    idle_timeout_ms: int = DEFAULT_IDLE_TIMEOUT_MS
    wake_latency_ms: int = DEFAULT_WAKE_LATENCY_MS
    simulation: dict = field(default_factory=dict)

    def property_decl(self, name: str) -> PropertyDecl | None:
        for decl in self.properties:
            if decl.name == name:
                return decl
        return None

    def action_decl(self, name: str) -> ActionDecl | None:
        for decl in self.actions:
            if decl.name == name:
                return decl
        return None

    def to_document(self) -> dict:
        doc = {
            "deviceId": self.device_id,
            "devtype": self.devtype,
            "attributes": dict(self.attributes),
            "properties": [
                {"name": p.name, "datatype": p.datatype, "units": p.units}
                for p in self.properties
            ],
            "actions": [
                {"name": a.name, "params": list(a.params)} for a in self.actions
            ],
            "energyClass": self.energy_class,
        }
        if self.energy_class == METERED:
            doc["batteryCapacity"] = self.battery_capacity
            profile: dict = {"kind": self.profile_kind}
            if self.profile_kind == STATIC:
                profile["costs"] = dict(self.static_costs)
            doc["energyProfile"] = profile
        if self.cache_model:
            doc["cacheModel"] = {"name": self.cache_model, "params": dict(self.cache_params)}
        if self.owner:
            doc["owner"] = self.owner
        if self.energy_class == SLEEPY:
            doc["idleTimeoutMs"] = self.idle_timeout_ms
            doc["wakeLatencyMs"] = self.wake_latency_ms
        if self.simulation:
            doc["simulation"] = self.simulation
        return doc


def _require_ident(value, fieldname: str) -> str:
    if not isinstance(value, str) or not _IDENT.match(value):
        raise ManifestError(f"{fieldname}: must be an identifier, got {value!r}")
    return value


def _string_map(value, fieldname: str) -> dict[str, str]:
    if not isinstance(value, dict):
        raise ManifestError(f"{fieldname}: must be a string map")
    return {str(k): str(v) for k, v in value.items()}


def load_manifest(document: str | dict) -> DeviceManifest:
    """Parse and validate one manifest document (JSON text or dict)."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"document: not valid JSON ({exc})") from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ManifestError("document: top level must be an object")

    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ManifestError(f"{sorted(unknown)[0]}: unknown field")

    if "deviceId" not in doc:
        raise ManifestError("deviceId: required")
    device_id = str(doc["deviceId"])
    if not device_id:
        raise ManifestError("deviceId: must be nonempty")
    devtype = _require_ident(doc.get("devtype"), "devtype")

    attributes = _string_map(doc.get("attributes", {}), "attributes")

    properties: list[PropertyDecl] = []
    for i, entry in enumerate(doc.get("properties", [])):
        name = _require_ident(entry.get("name"), f"properties[{i}].name")
        datatype = entry.get("datatype")
        if datatype not in known_datatypes():
            raise ManifestError(
                f"properties[{i}].datatype: {datatype!r} has no registered diff adapter"
            )
        if any(p.name == name for p in properties):
            raise ManifestError(f"properties[{i}].name: duplicate {name!r}")
        properties.append(PropertyDecl(name, datatype, str(entry.get("units", ""))))

    actions: list[ActionDecl] = []
    for i, entry in enumerate(doc.get("actions", [])):
        name = _require_ident(entry.get("name"), f"actions[{i}].name")
        if any(a.name == name for a in actions):
            raise ManifestError(f"actions[{i}].name: duplicate {name!r}")
        params = tuple(str(p) for p in entry.get("params", []))
        actions.append(ActionDecl(name, params))

    energy_class = doc.get("energyClass", NON_ENERGY_AWARE)
    if energy_class not in ENERGY_CLASSES:
        raise ManifestError(f"energyClass: must be one of {ENERGY_CLASSES}")

    profile_kind = None
    static_costs: dict[str, float] = {}
    battery_capacity = None
    if energy_class == METERED:
        if "batteryCapacity" not in doc:
            raise ManifestError("batteryCapacity: required for Metered devices")
        battery_capacity = float(doc["batteryCapacity"])
        if battery_capacity < 0:
            raise ManifestError("batteryCapacity: must be nonnegative")
        profile = doc.get("energyProfile", {"kind": DYNAMIC})
        profile_kind = profile.get("kind")
        if profile_kind not in (STATIC, DYNAMIC):
            raise ManifestError("energyProfile.kind: must be Static or Dynamic")
        if profile_kind == STATIC:
            costs = profile.get("costs")
            if not isinstance(costs, dict):
                raise ManifestError("energyProfile.costs: required for Static profiles")
            static_costs = {str(k): float(v) for k, v in costs.items()}
    elif "energyProfile" in doc or "batteryCapacity" in doc:
        raise ManifestError("energyProfile: only valid on Metered devices")

    cache_model = None
    cache_params: dict = {}
    if "cacheModel" in doc:
        cm = doc["cacheModel"]
        if not isinstance(cm, dict) or "name" not in cm:
            raise ManifestError("cacheModel: must be an object with a name")
        cache_model = str(cm["name"])
        cache_params = dict(cm.get("params", {}))

    return DeviceManifest(
        device_id=device_id,
        devtype=devtype,
        attributes=attributes,
        properties=properties,
        actions=actions,
        energy_class=energy_class,
        profile_kind=profile_kind,
        static_costs=static_costs,
        battery_capacity=battery_capacity,
        cache_model=cache_model,
        cache_params=cache_params,
        owner=doc.get("owner"),
        idle_timeout_ms=int(doc.get("idleTimeoutMs", DEFAULT_IDLE_TIMEOUT_MS)),
        wake_latency_ms=int(doc.get("wakeLatencyMs", DEFAULT_WAKE_LATENCY_MS)),
        simulation=dict(doc.get("simulation", {})),
    )
