"""Registry, manifests, selection priority, energy, and sleep behavior."""

import json
from pathlib import Path

import numpy as np
import pytest

from constellation.device import (
    DeviceRegistry,
    EmptySet,
    EnergyExhausted,
    ManifestError,
    RegistrationError,
    ScriptedDriver,
    UnknownDevice,
    load_manifest,
)

MANIFEST_DIR = Path(__file__).resolve().parents[1] / "src/constellation/data/manifests"


def manifest_doc(device_id="t1", devtype="Thermometer", **extra):
    doc = {
        "deviceId": device_id,
        "devtype": devtype,
        "attributes": {"location": "room1"},
        "properties": [{"name": "Temperature", "datatype": "Double", "units": "C"}],
        "actions": [],
    }
    doc.update(extra)
    return doc


def metered(device_id, capacity, costs=None, **extra):
    profile = {"kind": "Static", "costs": costs or {"Sense": 2}}
    if extra.pop("dynamic", False):
        profile = {"kind": "Dynamic"}
    return manifest_doc(device_id, energyClass="Metered",
                        batteryCapacity=capacity, energyProfile=profile, **extra)


# --- manifests ---------------------------------------------------------------

def test_shipped_manifests_all_load():
    files = sorted(MANIFEST_DIR.glob("*.json"))
    assert len(files) >= 5
    loaded = [load_manifest(f.read_text()) for f in files]
    assert len({m.device_id for m in loaded}) == len(loaded)


def test_load_simple_manifest():
    m = load_manifest(json.dumps(manifest_doc()))
    assert m.device_id == "t1"
    assert m.properties[0].name == "Temperature"
    assert m.properties[0].datatype == "Double"
    assert m.energy_class == "NonEnergyAware"


def test_unknown_field_rejected():
    with pytest.raises(ManifestError, match="frobnicate"):
        load_manifest(json.dumps(manifest_doc(frobnicate=1)))


def test_unknown_datatype_rejected():
    doc = manifest_doc()
    doc["properties"][0]["datatype"] = "Quaternion"
    with pytest.raises(ManifestError, match="datatype"):
        load_manifest(json.dumps(doc))


def test_metered_requires_battery_capacity():
    doc = manifest_doc(energyClass="Metered")
    with pytest.raises(ManifestError, match="batteryCapacity"):
        load_manifest(json.dumps(doc))


def test_duplicate_registration_rejected():
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(manifest_doc("dup"))))
    with pytest.raises(RegistrationError):
        reg.register(load_manifest(json.dumps(manifest_doc("dup"))))


def test_manifest_round_trips_through_document():
    m = load_manifest((MANIFEST_DIR / "gps_tag.json").read_text())
    again = load_manifest(json.dumps(m.to_document()))
    assert again.device_id == m.device_id
    assert again.static_costs == m.static_costs
    assert again.battery_capacity == m.battery_capacity


# --- devsets -----------------------------------------------------------------

def make_registry():
    reg = DeviceRegistry()
    for i, loc in enumerate(["room1", "room1", "room2"]):
        reg.register(load_manifest(json.dumps(
            manifest_doc(f"t{i}", attributes={"location": loc}))))
    return reg


def test_resolve_devset_filters_on_attributes():
    reg = make_registry()
    got = reg.resolve_devset("Thermometer", [("location", "room1")])
    assert got.members == ["t0", "t1"]


def test_resolve_devset_empty_where_matches_all():
    reg = make_registry()
    assert reg.resolve_devset("Thermometer").members == ["t0", "t1", "t2"]


def test_resolve_devset_unknown_devtype():
    reg = make_registry()
    with pytest.raises(EmptySet):
        reg.resolve_devset("Hygrometer")


def test_predicates_always_narrow():
    reg = make_registry()
    base = set(reg.resolve_devset("Thermometer").members)
    for where in ([("location", "room1")], [("location", "room2")]):
        assert set(reg.resolve_devset("Thermometer", where).members) <= base


# --- selection priority --------------------------------------------------------

def test_selection_prefers_non_energy_aware():
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(metered("B", 100))))
    reg.register(load_manifest(json.dumps(manifest_doc("A"))))
    reg.register(load_manifest(json.dumps(metered("C", 100))))
    reg.energy_state("B").remaining = 50.0
    reg.energy_state("C").remaining = 80.0
    devset = reg.resolve_devset("Thermometer")
    assert reg.select_device(devset, 1).device_ids == ["A"]
    assert reg.select_device(devset, 3).device_ids == ["A", "C", "B"]


def test_selection_metered_by_battery_descending():
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(metered("B", 100))))
    reg.register(load_manifest(json.dumps(metered("C", 100))))
    reg.energy_state("B").remaining = 50.0
    reg.energy_state("C").remaining = 80.0
    sel = reg.select_device(reg.resolve_devset("Thermometer"), 1)
    assert sel.device_ids == ["C"]
    assert sel.short is False


def test_selection_exhaustive_pairwise_order():
    # NonEnergyAware < Metered(desc battery) < Sleepy awake < Sleepy asleep,
    # with deviceId as the final tie-break.
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(manifest_doc("n2"))))
    reg.register(load_manifest(json.dumps(manifest_doc("n1"))))
    reg.register(load_manifest(json.dumps(metered("m_lo", 100))))
    reg.register(load_manifest(json.dumps(metered("m_hi", 100))))
    reg.register(load_manifest(json.dumps(manifest_doc("s_wake", energyClass="Sleepy"))))
    reg.register(load_manifest(json.dumps(manifest_doc("s_sleep", energyClass="Sleepy"))))
    reg.energy_state("m_lo").remaining = 10.0
    reg.energy_state("m_hi").remaining = 90.0
    reg.manage_sleep("s_sleep", 60_001)  # idle past timeout -> asleep
    order = reg.select_device(reg.resolve_devset("Thermometer"), 6).device_ids
    assert order == ["n1", "n2", "m_hi", "m_lo", "s_wake", "s_sleep"]


def test_short_set_is_flagged():
    reg = make_registry()
    sel = reg.select_device(reg.resolve_devset("Thermometer"), 5)
    assert sel.device_ids == ["t0", "t1", "t2"]
    assert sel.short is True


# --- energy -------------------------------------------------------------------

def test_static_profile_subtracts_cost():
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(metered("m", 10, {"Sense": 2}))))
    reg.sense("m", "Temperature", now_ms=0)
    assert reg.energy_state("m").remaining == 8


def test_exhaustion_exactly_at_depletion():
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(metered("m", 5, {"Sense": 2}))))
    reg.sense("m", "Temperature", 0)
    reg.sense("m", "Temperature", 1)
    assert reg.energy_state("m").remaining == 1
    with pytest.raises(EnergyExhausted):
        reg.sense("m", "Temperature", 2)
    # Unavailable to selection until recharged; serving also refused.
    sel = reg.select_device(reg.resolve_devset("Thermometer"), 1)
    assert sel.device_ids == [] and sel.short
    with pytest.raises(EnergyExhausted):
        reg.sense("m", "Temperature", 3)
    reg.energy_state("m").recharge()
    assert reg.select_device(reg.resolve_devset("Thermometer"), 1).device_ids == ["m"]


def test_dynamic_profile_recovers_constant_cost():
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(metered("m", 1000, dynamic=True))))
    now = 0
    for gap in (1_000, 2_500, 4_000, 8_000):
        now += gap
        reg.record_energy_event("m", "Sense", now, observed=3.0)
    est = reg.energy_state("m").estimate("Sense", elapsed_ms=5_000)
    assert est == pytest.approx(3.0, abs=1e-9)


def test_dynamic_profile_two_factor_fit():
    # cost = 2.0 per Sense + 0.001 per elapsed ms, recovered by regression.
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(metered("m", 1000, dynamic=True))))
    now = 0
    for gap in (1_000, 3_000, 5_000, 2_000, 7_000):
        now += gap
        reg.record_energy_event("m", "Sense", now, observed=2.0 + 0.001 * gap)
    est = reg.energy_state("m").estimate("Sense", elapsed_ms=4_000)
    assert est == pytest.approx(6.0, abs=1e-6)


def test_remaining_never_increases_without_recharge():
    state_doc = metered("m", 100, dynamic=True)
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(state_doc)))
    levels = [reg.energy_state("m").remaining]
    now = 0
    rng = np.random.default_rng(5)
    for _ in range(20):
        now += int(rng.integers(100, 5_000))
        reg.record_energy_event("m", "Sense", now, observed=float(rng.uniform(0, 2)))
        levels.append(reg.energy_state("m").remaining)
    assert all(b <= a for a, b in zip(levels, levels[1:]))


# --- sleep ---------------------------------------------------------------------

def sleepy_registry(idle=30_000, wake=500):
    reg = DeviceRegistry()
    reg.register(load_manifest(json.dumps(
        manifest_doc("s", energyClass="Sleepy", idleTimeoutMs=idle, wakeLatencyMs=wake,
                     simulation={"properties": {"Temperature": {"kind": "constant", "value": 21.0}}}))))
    return reg


def test_sleepy_device_sleeps_when_idle():
    reg = sleepy_registry()
    assert reg.manage_sleep("s", 60_000) == "slept"
    assert reg.is_asleep("s")


def test_recent_use_keeps_device_awake():
    reg = sleepy_registry()
    reg.sense("s", "Temperature", 50_000)
    assert reg.manage_sleep("s", 60_000) == "unchanged"
    assert not reg.is_asleep("s")


def test_wake_adds_latency_and_preserves_state():
    reg = sleepy_registry()
    before = reg.sense("s", "Temperature", 0)
    reg.manage_sleep("s", 60_000)
    assert reg.is_asleep("s")
    after = reg.sense("s", "Temperature", 61_000)
    assert after.latency_ms == before.latency_ms + 500
    assert after.value == before.value
    assert not reg.is_asleep("s")


def test_manage_sleep_wakes_for_pending_task():
    reg = sleepy_registry()
    reg.manage_sleep("s", 60_000)
    assert reg.manage_sleep("s", 61_000, pending_task=True) == "woken"


# --- drivers --------------------------------------------------------------------

def test_scripted_driver_action_effects():
    m = load_manifest((MANIFEST_DIR / "smart_light.json").read_text())
    driver = ScriptedDriver(m)
    assert driver.sense("PowerState", 0) == "off"
    driver.actuate("TurnOn", {}, 1)
    assert driver.sense("PowerState", 2) == "on"
    driver.actuate("SetBrightness", {"level": "80"}, 3)
    assert driver.sense("Brightness", 4) == "80"


def test_unknown_device_raises():
    reg = DeviceRegistry()
    with pytest.raises(UnknownDevice):
        reg.sense("ghost", "Temperature", 0)
