"""Thing descriptions and the gateway-side scripted thing state."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from constellation.device import DeviceManifest
from constellation.device.drivers import value_generator


class ThingError(Exception):
    pass


class UnknownThing(ThingError):
    pass


class UnknownThingProperty(ThingError):
    pass


class UnknownThingAction(ThingError):
    pass


class ReadOnlyProperty(ThingError):
    pass


class PropertyTypeMismatch(ThingError):
    pass


def wot_type(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, (list, tuple)):
        return "array"
    return "string"


@dataclass
class ThingDescription:
    """JSON-shaped view of one thing: properties with values, actions."""

    thing_id: str
    title: str
    properties: dict[str, dict] = field(default_factory=dict)  # name -> {type,value,writable}
    actions: dict[str, dict] = field(default_factory=dict)     # name -> {params}

    def to_wire(self) -> dict:
        return {
            "id": self.thing_id,
            "title": self.title,
            "properties": self.properties,
            "actions": self.actions,
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "ThingDescription":
        return cls(doc["id"], doc.get("title", doc["id"]),
                   dict(doc.get("properties", {})), dict(doc.get("actions", {})))


class Thing:
    """Mutable gateway-side thing built from a device manifest.

    Constant-scripted properties are writable; generator-driven ones are
    read-only sensors evaluated at the current time. Actions apply the
    manifest's effects to property state.
    """

    def __init__(self, manifest: DeviceManifest):
        self.thing_id = manifest.device_id
        self.title = manifest.devtype
        self._lock = threading.Lock()
        self._values: dict[str, object] = {}
        self._generators: dict[str, object] = {}
        self._writable: dict[str, bool] = {}
        self._actions: dict[str, tuple[str, ...]] = {
            a.name: a.params for a in manifest.actions
        }
        self._effects = dict(manifest.simulation.get("actionEffects", {}))
        scripted = manifest.simulation.get("properties", {})
        for decl in manifest.properties:
            spec = scripted.get(decl.name, {"kind": "constant", "value": 0.0})
            if spec.get("kind", "constant") == "constant":
                self._values[decl.name] = spec.get("value", 0.0)
                self._writable[decl.name] = True
            else:
                self._generators[decl.name] = value_generator(spec)
                self._writable[decl.name] = False

    def property_names(self) -> list[str]:
        return sorted(set(self._values) | set(self._generators))

    def get_property(self, name: str, now_ms: int):
        with self._lock:
            if name in self._values:
                return self._values[name]
            if name in self._generators:
                return self._generators[name](now_ms)
        raise UnknownThingProperty(name)

    def put_property(self, name: str, value) -> None:
        with self._lock:
            if name not in self._values and name not in self._generators:
                raise UnknownThingProperty(name)
            if not self._writable.get(name, False):
                raise ReadOnlyProperty(name)
            current = self._values[name]
            if wot_type(current) != wot_type(value):
                raise PropertyTypeMismatch(
                    f"{name} expects {wot_type(current)}, got {wot_type(value)}")
            self._values[name] = value

    def invoke_action(self, name: str, params: dict) -> None:
        if name not in self._actions:
            raise UnknownThingAction(name)
        with self._lock:
            for prop, value in self._effects.get(name, {}).items():
                if isinstance(value, str) and value.startswith("$"):
                    value = params.get(value[1:])
                self._values[prop] = value

    def describe(self, now_ms: int) -> ThingDescription:
        props = {}
        for name in self.property_names():
            value = self.get_property(name, now_ms)
            props[name] = {
                "type": wot_type(value),
                "value": value,
                "writable": self._writable.get(name, False),
            }
        actions = {name: {"params": list(params)} for name, params in self._actions.items()}
        return ThingDescription(self.thing_id, self.title, props, actions)
