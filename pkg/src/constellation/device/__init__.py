"""Device registry, manifests, virtual drivers, and energy accounting."""

from .drivers import CallbackDriver, DeviceDriver, DeviceError, ScriptedDriver, UnknownAction, UnknownProperty
from .energy import EnergyExhausted, EnergyState
from .manifest import (
    DYNAMIC,
    METERED,
    NON_ENERGY_AWARE,
    SLEEPY,
    STATIC,
    DeviceManifest,
    ManifestError,
    load_manifest,
)
from .registry import (
    SLEPT,
    UNCHANGED,
    WOKEN,
    DeviceRegistry,
    DevSet,
    EmptySet,
    RegistrationError,
    Selection,
    ServeResult,
    UnknownDevice,
)

__all__ = [
    "CallbackDriver", "DeviceDriver", "DeviceError", "ScriptedDriver",
    "UnknownAction", "UnknownProperty",
    "EnergyExhausted", "EnergyState",
    "DYNAMIC", "METERED", "NON_ENERGY_AWARE", "SLEEPY", "STATIC",
    "DeviceManifest", "ManifestError", "load_manifest",
    "SLEPT", "UNCHANGED", "WOKEN",
    "DeviceRegistry", "DevSet", "EmptySet", "RegistrationError",
    "Selection", "ServeResult", "UnknownDevice",
]
