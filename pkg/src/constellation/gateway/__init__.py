"""Mock gateway service and the mirror-device bridge."""

from .bridge import (
    GatewayBridge,
    MirrorDriver,
    devtype_from_title,
    manifest_for_thing,
    mirror_device_id,
)
from .client import GatewayClient, GatewayRequestError, GatewayUnreachable
from .service import GatewayServer, GatewayState
from .things import Thing, ThingDescription

__all__ = [
    "GatewayBridge", "MirrorDriver", "devtype_from_title",
    "manifest_for_thing", "mirror_device_id",
    "GatewayClient", "GatewayRequestError", "GatewayUnreachable",
    "GatewayServer", "GatewayState",
    "Thing", "ThingDescription",
]
