"""Imports gateway things as local mirror devices.

A mirror's manifest is derived from the thing description; its driver
delegates every sense/actuate to gateway REST calls, so the node never
talks to the mirrored device directly.
"""

from __future__ import annotations

import re

from constellation.device import DeviceDriver, DeviceManifest, DeviceRegistry
from constellation.device.manifest import ActionDecl, PropertyDecl

from .client import GatewayClient, GatewayUnreachable
from .things import ThingDescription

_WOT_DATATYPE = {"number": "Double", "boolean": "Discrete",
                 "string": "Discrete", "array": "Discrete"}


def mirror_device_id(url: str, thing_id: str) -> str:
    return f"{url.rstrip('/')}#{thing_id}"


def devtype_from_title(title: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9_-]", "_", title)
    if not re.match(r"[A-Za-z_]", cleaned):
        cleaned = "T_" + cleaned
    return cleaned


class MirrorDriver(DeviceDriver):
    """Delegates all device traffic to the owning gateway."""

    served_tag = "Gateway"

    def __init__(self, client: GatewayClient, thing_id: str):
        self.client = client
        self.thing_id = thing_id
        self.sense_count = 0
        self.actuate_count = 0

    def sense(self, prop: str, now_ms: int):
        self.sense_count += 1
        return self.client.get_property(self.thing_id, prop)

    def actuate(self, action: str, params: dict[str, str], now_ms: int) -> None:
        self.actuate_count += 1
        self.client.invoke_action(self.thing_id, action, params)


def manifest_for_thing(url: str, thing: ThingDescription) -> DeviceManifest:
    properties = [
        PropertyDecl(name, _WOT_DATATYPE.get(meta.get("type", "string"), "Discrete"))
        for name, meta in sorted(thing.properties.items())
    ]
    actions = [
        ActionDecl(name, tuple(meta.get("params", [])))
        for name, meta in sorted(thing.actions.items())
    ]
    return DeviceManifest(
        device_id=mirror_device_id(url, thing.thing_id),
        devtype=devtype_from_title(thing.title),
        attributes={"gatewayUrl": url, "thingId": thing.thing_id},
        properties=properties,
        actions=actions,
        cache_model="Consistent",
    )


class GatewayBridge:
    """Tracks which mirrors came from which gateway; import is idempotent."""

    def __init__(self, registry: DeviceRegistry):
        self.registry = registry
        self._imports: dict[str, set[str]] = {}   # url -> mirror deviceIds
        self.clients: dict[str, GatewayClient] = {}

    def import_gateway(self, url: str, token: str | None = None) -> list[str]:
        """Registers one mirror per thing; re-import refreshes in place.

        On any mid-import failure the registry is restored to its prior
        state for this gateway.
        """
        client = GatewayClient(url, token)
        ledger = client.fetch_ledger()   # raises GatewayUnreachable
        self.clients[url] = client
        previous = self._imports.get(url, set())

        added: list[str] = []
        imported: list[str] = []
        try:
            for thing in ledger:
                manifest = manifest_for_thing(url, thing)
                device_id = manifest.device_id
                if device_id in previous:
                    self.registry.unregister(device_id)
                self.registry.register(manifest, MirrorDriver(client, thing.thing_id))
                if device_id not in previous:
                    added.append(device_id)
                imported.append(device_id)
        except Exception:
            for device_id in added:
                self.registry.unregister(device_id)
            raise
        # Things that disappeared from the gateway lose their mirrors.
        for stale in previous - set(imported):
            try:
                self.registry.unregister(stale)
            except Exception:
                pass
        self._imports[url] = set(imported)
        return imported

    def mirrors(self, url: str) -> set[str]:
        return set(self._imports.get(url, set()))


__all__ = [
    "GatewayBridge",
    "GatewayUnreachable",
    "MirrorDriver",
    "devtype_from_title",
    "manifest_for_thing",
    "mirror_device_id",
]
