"""Gateway protocol, bridge import, mirrors, and end-to-end actuation."""

import json
import random
from pathlib import Path

import pytest

from constellation.device import DeviceRegistry, load_manifest
from constellation.gateway import (
    GatewayBridge,
    GatewayClient,
    GatewayRequestError,
    GatewayServer,
    GatewayState,
    GatewayUnreachable,
    devtype_from_title,
    mirror_device_id,
)
from constellation.runtime import RuntimeEngine, SimClock

MANIFEST_DIR = Path(__file__).resolve().parents[1] / "src/constellation/data/manifests"


@pytest.fixture
def gateway():
    state = GatewayState()
    state.add_thing(load_manifest((MANIFEST_DIR / "light_strip.json").read_text()))
    server = GatewayServer(state).start()
    yield server
    server.stop()


@pytest.fixture
def client(gateway):
    return GatewayClient(gateway.url)


def test_ledger_lists_light_strip(client):
    ledger = client.fetch_ledger()
    assert len(ledger) == 1
    thing = ledger[0]
    assert thing.thing_id == "lightstrip-1"
    assert set(thing.properties) == {"on", "color", "brightness"}
    assert {"TurnOn", "TurnOff", "ChangeColor"} <= set(thing.actions)
    assert thing.properties["on"] == {"type": "boolean", "value": False, "writable": True}


def test_empty_gateway_serves_empty_ledger():
    server = GatewayServer(GatewayState()).start()
    try:
        assert GatewayClient(server.url).fetch_ledger() == []
    finally:
        server.stop()


def test_two_gateways_have_independent_ledgers(gateway):
    other_state = GatewayState()
    other = GatewayServer(other_state).start()
    try:
        GatewayClient(gateway.url).put_property("lightstrip-1", "on", True)
        assert GatewayClient(other.url).fetch_ledger() == []
    finally:
        other.stop()


def test_put_then_get_read_your_write(client):
    client.put_property("lightstrip-1", "on", True)
    assert client.get_property("lightstrip-1", "on") is True
    client.put_property("lightstrip-1", "brightness", 40.0)
    assert client.get_property("lightstrip-1", "brightness") == 40.0


def test_action_mutates_state(client):
    client.invoke_action("lightstrip-1", "TurnOn", {})
    assert client.get_property("lightstrip-1", "on") is True
    client.invoke_action("lightstrip-1", "ChangeColor", {"color": "#ff0000"})
    assert client.get_property("lightstrip-1", "color") == "#ff0000"


def test_unknown_thing_and_property_are_404(client):
    with pytest.raises(GatewayRequestError) as e:
        client.get_property("ghost", "on")
    assert e.value.status == 404
    with pytest.raises(GatewayRequestError) as e:
        client.get_property("lightstrip-1", "nope")
    assert e.value.status == 404


def test_type_mismatch_is_400(client):
    with pytest.raises(GatewayRequestError) as e:
        client.put_property("lightstrip-1", "on", "sideways")
    assert e.value.status == 400


def test_read_only_property_rejected():
    state = GatewayState()
    state.add_thing(load_manifest((MANIFEST_DIR / "thermometer.json").read_text()))
    server = GatewayServer(state).start()
    try:
        client = GatewayClient(server.url)
        with pytest.raises(GatewayRequestError) as e:
            client.put_property("therm-1", "Temperature", 99.0)
        assert e.value.status == 400
    finally:
        server.stop()


def test_bearer_token_enforced():
    state = GatewayState(token="s3cret")
    server = GatewayServer(state).start()
    try:
        with pytest.raises(GatewayRequestError) as e:
            GatewayClient(server.url).fetch_ledger()
        assert e.value.status == 401
        assert GatewayClient(server.url, token="s3cret").fetch_ledger() == []
    finally:
        server.stop()


# --- bridge ----------------------------------------------------------------------

def test_import_registers_mirrors(gateway):
    registry = DeviceRegistry()
    bridge = GatewayBridge(registry)
    imported = bridge.import_gateway(gateway.url)
    assert imported == [mirror_device_id(gateway.url, "lightstrip-1")]
    devset = registry.resolve_devset("LightStrip")
    assert devset.members == imported


def test_reimport_is_idempotent(gateway):
    registry = DeviceRegistry()
    bridge = GatewayBridge(registry)
    first = bridge.import_gateway(gateway.url)
    second = bridge.import_gateway(gateway.url)
    assert first == second
    assert len(registry.resolve_devset("LightStrip").members) == 1


def test_unreachable_gateway_leaves_registry_unchanged():
    registry = DeviceRegistry()
    bridge = GatewayBridge(registry)
    with pytest.raises(GatewayUnreachable):
        bridge.import_gateway("http://127.0.0.1:1")  # nothing listens there
    assert registry.device_ids() == []


def test_devtype_sanitized_from_title():
    assert devtype_from_title("LightStrip") == "LightStrip"
    assert devtype_from_title("Phillips Hue!") == "Phillips_Hue_"
    assert devtype_from_title("9lives") == "T_9lives"


def test_mirror_fidelity_100_randomized_writes(gateway):
    registry = DeviceRegistry()
    bridge = GatewayBridge(registry)
    [mirror_id] = bridge.import_gateway(gateway.url)
    direct = GatewayClient(gateway.url)
    driver = registry.driver(mirror_id)
    rng = random.Random(12)
    for i in range(100):
        prop, value = rng.choice([
            ("on", rng.random() < 0.5),
            ("color", "#%06x" % rng.randrange(0xFFFFFF)),
            ("brightness", round(rng.uniform(0, 100), 2)),
        ])
        direct.put_property("lightstrip-1", prop, value)
        assert driver.sense(prop, i) == direct.get_property("lightstrip-1", prop)


def test_runtime_actuate_through_mirror(gateway):
    registry = DeviceRegistry()
    bridge = GatewayBridge(registry)
    bridge.import_gateway(gateway.url)
    engine = RuntimeEngine(registry, clock=SimClock())
    engine.gateway_importer = bridge.import_gateway
    engine.submit("ACTUATE TurnOn ON LightStrip", "c1")
    [result] = engine.run_due()
    assert result.per_device[0].kind == "Ack"
    assert result.per_device[0].served_by == "Gateway"
    # Oracle: the gateway's own state changed.
    assert GatewayClient(gateway.url).get_property("lightstrip-1", "on") is True


def test_import_via_cql_statement(gateway):
    registry = DeviceRegistry()
    bridge = GatewayBridge(registry)
    engine = RuntimeEngine(registry, clock=SimClock())
    engine.gateway_importer = bridge.import_gateway
    out = engine.submit(f'IMPORT GATEWAY "{gateway.url}"', "c1")
    assert out.kind == "import"
    assert len(out.imported) == 1
    engine.submit("SENSE on FROM LightStrip", "c1")
    [result] = engine.run_due()
    assert result.per_device[0].value is False
    assert result.per_device[0].served_by == "Gateway"


def test_offloading_all_traffic_goes_through_gateway(gateway):
    registry = DeviceRegistry()
    bridge = GatewayBridge(registry)
    [mirror_id] = bridge.import_gateway(gateway.url)
    engine = RuntimeEngine(registry, clock=SimClock())
    engine.submit("SENSE brightness FROM LightStrip", "c1")
    engine.submit("ACTUATE TurnOff ON LightStrip", "c1")
    engine.run_due()
    driver = registry.driver(mirror_id)
    client = bridge.clients[gateway.url]
    # Every driver-level operation maps one-for-one onto gateway calls.
    assert driver.sense_count == 1 and driver.actuate_count == 1
    assert client.gets >= driver.sense_count  # +1 for the import ledger fetch
    assert client.posts == driver.actuate_count
