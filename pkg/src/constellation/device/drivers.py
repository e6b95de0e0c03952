"""Driver contract and the scripted virtual driver.

Virtual drivers are built from the manifest's ``simulation`` section so a
device can be re-instantiated byte-identically on any node (which is what
makes failover of simulated devices possible). Property generators are
pure functions of time; actuations overlay mutable property state.
"""

from __future__ import annotations

import math
import random


class DeviceError(Exception):
    pass


class UnknownProperty(DeviceError):
    pass


class UnknownAction(DeviceError):
    pass


class DeviceDriver:
    """What every device driver provides to the runtime."""

    latency_ms = 0

    def sense(self, prop: str, now_ms: int):
        raise NotImplementedError

    def actuate(self, action: str, params: dict[str, str], now_ms: int) -> None:
        raise NotImplementedError


def value_generator(spec: dict):
    kind = spec.get("kind", "constant")
    if kind == "constant":
        value = spec.get("value", 0.0)
        return lambda t: value
    if kind == "linear":
        base = float(spec.get("base", 0.0))
        slope = float(spec.get("slopePerMs", 0.0))
        return lambda t: base + slope * t
    if kind == "sinusoid":
        mean = float(spec.get("mean", 0.0))
        amplitude = float(spec.get("amplitude", 1.0))
        period = float(spec.get("periodMs", 86_400_000.0))
        phase = float(spec.get("phase", 0.0))
        sigma = float(spec.get("noiseSigma", 0.0))
        seed = spec.get("seed", 0)

        def sample(t):
            value = mean + amplitude * math.sin(2 * math.pi * t / period + phase)
            if sigma:
                value += random.Random((seed, int(t))).gauss(0.0, sigma)
            return value

        return sample
    if kind == "step":
        before = float(spec.get("before", 0.0))
        after = float(spec.get("after", 1.0))
        at = float(spec.get("atMs", 0.0))
        return lambda t: before if t < at else after
    raise DeviceError(f"unknown generator kind {kind!r}")


class ScriptedDriver(DeviceDriver):
    """Drives a virtual device from manifest 'simulation' config."""

    def __init__(self, manifest):
        self.manifest = manifest
        sim = manifest.simulation
        self.latency_ms = int(sim.get("latencyMs", 0))
        self._generators = {
            name: value_generator(spec) for name, spec in sim.get("properties", {}).items()
        }
        self._effects = dict(sim.get("actionEffects", {}))
        self._overrides: dict[str, object] = {}
        self.sense_count = 0
        self.actuate_count = 0

    def sense(self, prop: str, now_ms: int):
        if self.manifest.property_decl(prop) is None:
            raise UnknownProperty(f"{self.manifest.device_id} has no property {prop!r}")
        self.sense_count += 1
        if prop in self._overrides:
            return self._overrides[prop]
        gen = self._generators.get(prop)
        if gen is None:
            return 0.0
        return gen(now_ms)

    def actuate(self, action: str, params: dict[str, str], now_ms: int) -> None:
        if self.manifest.action_decl(action) is None:
            raise UnknownAction(f"{self.manifest.device_id} has no action {action!r}")
        self.actuate_count += 1
        for prop, value in self._effects.get(action, {}).items():
            if isinstance(value, str) and value.startswith("$"):
                value = params.get(value[1:])
            self._overrides[prop] = value


class CallbackDriver(DeviceDriver):
    """Wraps plain callables; used by tests and the replay harness."""

    def __init__(self, sense_fn=None, actuate_fn=None, latency_ms: int = 0):
        self._sense = sense_fn
        self._actuate = actuate_fn
        self.latency_ms = latency_ms

    def sense(self, prop: str, now_ms: int):
        if self._sense is None:
            raise UnknownProperty(prop)
        return self._sense(prop, now_ms)

    def actuate(self, action: str, params: dict[str, str], now_ms: int) -> None:
        if self._actuate is not None:
            self._actuate(action, params, now_ms)
