"""Scheduler semantics: periods, deadlines, events, cancellation, tracing."""

import json

import pytest

from constellation.cql import parse_query
from constellation.device import CallbackDriver, DeviceRegistry, load_manifest
from constellation.privacy import PolicyRule, PrivacyMediator
from constellation.runtime import (
    ACTIVE,
    CANCELLED,
    COMPLETED,
    OUTCOME_ACK,
    OUTCOME_ERROR,
    OUTCOME_VALUE,
    RuntimeEngine,
    SimClock,
    UnknownDevSet,
)

HOUR = 3_600_000
Q15 = 900_000


def thermometer_doc(device_id, latency=0, value=21.0, location="room1"):
    return {
        "deviceId": device_id,
        "devtype": "Thermometer",
        "attributes": {"location": location},
        "properties": [{"name": "Temperature", "datatype": "Double", "units": "C"}],
        "actions": [],
        "cacheModel": {"name": "Consistent"},
        "simulation": {
            "latencyMs": latency,
            "properties": {"Temperature": {"kind": "constant", "value": value}},
        },
    }


def light_doc(device_id="light-1"):
    return {
        "deviceId": device_id,
        "devtype": "Light",
        "attributes": {},
        "properties": [{"name": "PowerState", "datatype": "Discrete", "units": ""}],
        "actions": [{"name": "TurnOn", "params": []}, {"name": "TurnOff", "params": []}],
        "simulation": {
            "properties": {"PowerState": {"kind": "constant", "value": "off"}},
            "actionEffects": {"TurnOn": {"PowerState": "on"},
                              "TurnOff": {"PowerState": "off"}},
        },
    }


def make_engine(*docs, mediator=None):
    registry = DeviceRegistry()
    for doc in docs:
        registry.register(load_manifest(json.dumps(doc)))
    clock = SimClock()
    engine = RuntimeEngine(registry, mediator=mediator, clock=clock)
    return engine, clock


def drive(engine, clock, until_ms, step_ms):
    results = []
    while clock.now_ms() < until_ms:
        clock.advance(step_ms)
        results.extend(engine.run_due())
    return results


# --- compilation ----------------------------------------------------------------

def test_compile_periodic_sense_task():
    engine, _ = make_engine(thermometer_doc("t1"))
    out = engine.submit(
        "SENSE Temperature FROM Thermometer DELTA 1 HRS ERROR 2 PERIOD 15 MINS", "c1")
    assert out.kind == "task"
    assert out.task.period_ms == Q15
    assert out.task.devset.members == ["t1"]
    assert out.task.status == ACTIVE


def test_one_shot_actuate_completes_after_single_fire():
    engine, clock = make_engine(light_doc())
    out = engine.submit("ACTUATE TurnOn ON Light", "c1")
    results = engine.run_due()
    assert len(results) == 1
    assert results[0].per_device[0].kind == OUTCOME_ACK
    assert out.task.status == COMPLETED
    clock.advance(10_000)
    assert engine.run_due() == []


def test_unknown_devset_error():
    engine, _ = make_engine(thermometer_doc("t1"))
    with pytest.raises(UnknownDevSet):
        engine.submit("SENSE Temperature FROM Hygrometer", "c1")


def test_find_binds_alias_for_later_statements():
    engine, _ = make_engine(thermometer_doc("t1"), thermometer_doc("t2", location="room2"))
    found = engine.submit("FIND Thermometer WHERE location=room2 AS Mine", "c1")
    assert found.devset.members == ["t2"]
    out = engine.submit("SENSE Temperature FROM Mine", "c1")
    assert out.task.devset.members == ["t2"]


# --- periodic firing ---------------------------------------------------------------

def test_periodic_fire_count_over_horizon():
    engine, clock = make_engine(thermometer_doc("t1"))
    engine.submit("SENSE Temperature FROM Thermometer PERIOD 15 MINS DELTA 1 HRS", "c1")
    horizon = 100 * Q15
    results = drive(engine, clock, horizon, Q15 // 3)
    assert abs(len(results) - horizon // Q15) <= 1


def test_periodic_fires_have_no_drift():
    engine, clock = make_engine(thermometer_doc("t1"))
    engine.submit("SENSE Temperature FROM Thermometer PERIOD 10 SECS", "c1")
    drive(engine, clock, 100_000, 3_333)  # uneven ticks
    fire_times = [int(line.split("\t")[0]) for line in engine.trace]
    assert fire_times == [n * 10_000 for n in range(len(fire_times))]


def test_cache_serves_between_device_queries():
    engine, clock = make_engine(thermometer_doc("t1"))
    engine.submit(
        "SENSE Temperature FROM Thermometer DELTA 1 HRS ERROR 2 PERIOD 15 MINS", "c1")
    results = drive(engine, clock, 16 * Q15, Q15)
    served = [r.per_device[0].served_by for r in results]
    assert served[:9] == ["Device", "Cache", "Cache", "Cache",
                          "Device", "Cache", "Cache", "Cache", "Device"]


# --- fan-out and isolation -----------------------------------------------------------

def test_cardinality_two_distinct_devices():
    engine, _ = make_engine(thermometer_doc("t1"), thermometer_doc("t2"))
    engine.submit("SENSE Temperature FROM Thermometer CARDINALITY 2", "c1")
    [result] = engine.run_due()
    assert [o.device_id for o in result.per_device] == ["t1", "t2"]
    assert all(o.kind == OUTCOME_VALUE for o in result.per_device)
    assert not result.short_set


def test_short_set_flagged_in_result():
    engine, _ = make_engine(thermometer_doc("t1"))
    engine.submit("SENSE Temperature FROM Thermometer CARDINALITY 3", "c1")
    [result] = engine.run_due()
    assert result.short_set
    assert len(result.per_device) == 1


def test_error_on_one_device_never_alters_siblings():
    registry = DeviceRegistry()
    registry.register(load_manifest(json.dumps(thermometer_doc("ok"))))
    bad = load_manifest(json.dumps(thermometer_doc("bad")))

    def explode(prop, now):
        raise RuntimeError("sensor fault")

    registry.register(bad, CallbackDriver(sense_fn=explode))
    engine = RuntimeEngine(registry, clock=SimClock())
    engine.submit("SENSE Temperature FROM Thermometer CARDINALITY 2", "c1")
    [result] = engine.run_due()
    by_id = {o.device_id: o for o in result.per_device}
    assert by_id["bad"].kind == OUTCOME_ERROR
    assert by_id["ok"].kind == OUTCOME_VALUE
    assert by_id["ok"].value == 21.0


# --- deadlines ------------------------------------------------------------------------

def test_deadline_miss_reported_not_cancelled():
    engine, clock = make_engine(thermometer_doc("slow", latency=50))
    out = engine.submit("SENSE Temperature FROM Thermometer DEADLINE 10 MS PERIOD 1 SECS", "c1")
    clock.advance(0)
    [result] = engine.run_due()
    assert result.deadline_met is False
    assert result.per_device[0].kind == OUTCOME_VALUE  # still delivered
    assert out.task.status == ACTIVE


def test_deadline_met_with_fast_device():
    engine, _ = make_engine(thermometer_doc("fast", latency=5))
    engine.submit("SENSE Temperature FROM Thermometer DEADLINE 10 MS", "c1")
    [result] = engine.run_due()
    assert result.deadline_met is True


# --- events ------------------------------------------------------------------------

def event_engine(initial=20.0):
    registry = DeviceRegistry()
    reading = {"value": initial}
    manifest = load_manifest(json.dumps(thermometer_doc("t1")))
    registry.register(manifest, CallbackDriver(sense_fn=lambda p, t: reading["value"]))
    registry.register(load_manifest(json.dumps(light_doc())))
    clock = SimClock()
    engine = RuntimeEngine(registry, clock=clock)
    return engine, clock, reading


def test_event_edge_triggered_once_per_epoch():
    engine, clock, reading = event_engine()
    engine.submit(
        "EVENT hot WHEN Temperature > 30 FROM Thermometer DO ACTUATE TurnOn ON Light", "c1")
    engine.run_due()
    reading["value"] = 31.0
    fired = drive(engine, clock, 10_000, 1_000)
    assert len(fired) == 1  # stays true, no retrigger
    assert fired[0].per_device[0].kind == OUTCOME_ACK
    # Falls below and crosses again: fires exactly once more.
    reading["value"] = 20.0
    drive(engine, clock, 13_000, 1_000)
    reading["value"] = 35.0
    fired = drive(engine, clock, 20_000, 1_000)
    assert len(fired) == 1


def test_event_body_actually_actuates():
    engine, clock, reading = event_engine(initial=31.0)
    engine.submit(
        "EVENT hot WHEN Temperature > 30 FROM Thermometer DO ACTUATE TurnOn ON Light", "c1")
    engine.run_due()
    assert engine.registry.driver("light-1").sense("PowerState", 0) == "on"


def test_periodic_event_fires_every_epoch():
    engine, clock, _ = event_engine()
    engine.submit("EVENT tick EVERY 2 SECS DO ACTUATE TurnOn ON Light", "c1")
    engine.run_due()
    fired = drive(engine, clock, 10_000, 500)
    assert len(fired) == 5


# --- cancellation ----------------------------------------------------------------------

def test_cancel_client_counts_and_silences():
    engine, clock = make_engine(thermometer_doc("t1"))
    for _ in range(3):
        engine.submit("SENSE Temperature FROM Thermometer PERIOD 10 SECS", "c1")
    engine.submit("SENSE Temperature FROM Thermometer PERIOD 10 SECS", "c2")
    assert engine.cancel_client("c1") == 3
    assert engine.cancel_client("c1") == 0
    assert engine.cancel_client("nobody") == 0
    results = drive(engine, clock, 30_000, 1_000)
    assert {engine.tasks[r.task_id].client_id for r in results} == {"c2"}
    assert all(t.status == CANCELLED for t in engine.tasks_for("c1"))


def test_no_fire_after_cancel_in_trace():
    engine, clock = make_engine(thermometer_doc("t1"))
    out = engine.submit("SENSE Temperature FROM Thermometer PERIOD 5 SECS", "c1")
    drive(engine, clock, 20_000, 1_000)
    engine.cancel_client("c1")
    cutoff = clock.now_ms()
    drive(engine, clock, 60_000, 1_000)
    for line in engine.trace:
        ts, task_id = line.split("\t")[:2]
        if task_id == out.task.task_id:
            assert int(ts) <= cutoff


# --- privacy integration ------------------------------------------------------------------

def test_blocked_value_absent_from_result():
    owners = {"t1": "alice"}
    mediator = PrivacyMediator(owner_lookup=owners.get)
    engine, _ = make_engine(thermometer_doc("t1"), mediator=mediator)
    mediator.set_policy("t1", [PolicyRule("Delete", block=("spy",))], issuer="alice")
    engine.submit("SENSE Temperature FROM Thermometer", "spy")
    [result] = engine.run_due()
    outcome = result.per_device[0]
    assert outcome.kind == OUTCOME_ERROR
    assert outcome.value is None
    assert "value" not in outcome.to_wire()


def test_denature_statement_sets_policy():
    owners = {"t1": "alice"}
    mediator = PrivacyMediator(owner_lookup=owners.get)
    engine, _ = make_engine(thermometer_doc("t1"), mediator=mediator)
    out = engine.submit("DENATURE SENSOR t1 DELETE BLOCK snoop", "alice")
    assert out.kind == "policy"
    engine.submit("SENSE Temperature FROM Thermometer", "snoop")
    [result] = engine.run_due()
    assert result.per_device[0].kind == OUTCOME_ERROR


def test_trace_line_format():
    engine, _ = make_engine(thermometer_doc("t1"))
    engine.submit("SENSE Temperature FROM Thermometer", "c1")
    engine.run_due()
    fields = engine.trace[0].split("\t")
    assert len(fields) == 7
    ts, task_id, kind, device_id, served_by, latency, outcome = fields
    assert kind == "Sense" and device_id == "t1"
    assert served_by in ("Device", "Cache", "Gateway")
    assert outcome == "Value"
