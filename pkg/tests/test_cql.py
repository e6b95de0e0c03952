"""Parser golden suite: round trips, duration normalization, rejections."""

import pytest

from constellation.cql import ParseError, ValidationError, parse_query, render_query
from constellation.cql.ast import ActuateSpec, Condition, FindSpec, Periodic, SenseSpec

# 20 canonical queries covering every statement kind and modifier combination.
GOLDEN = [
    "SENSE Temperature FROM Thermometer DELTA 1 HRS ERROR 2 PERIOD 15 MINS",
    "SENSE Temperature FROM Thermometer",
    "SENSE Humidity FROM H1 PERIOD 30 SECS DEADLINE 100 MS",
    "SENSE Position FROM GpsTag DELTA 5 MINS ERROR 0.5 CARDINALITY 3",
    "SENSE co2 FROM AirSensor DELTA 2 HRS PERIOD 2 HRS",
    "SENSE Frame FROM Camera DEADLINE 250 MS",
    "FIND Thermometer WHERE location=room1 AS T1",
    "FIND Camera AS C",
    "FIND Light WHERE location=room1,vendor=acme AS L",
    'FIND SoilProbe WHERE site="building 7" AS S7',
    "ACTUATE TurnOn ON Lights PARAMS brightness=80",
    "ACTUATE TurnOff ON Lights",
    "ACTUATE SetColor ON LightStrip PARAMS color=red,fade=2 CARDINALITY 2",
    "ACTUATE Ping ON Beacons PERIOD 10 SECS DEADLINE 1 SECS",
    "EVENT hot WHEN Temperature > 30 FROM Thermometer DO ACTUATE TurnOn ON Fans",
    "EVENT cold WHEN Temperature <= 10.5 FROM Thermometer DO ACTUATE TurnOn ON Heater PARAMS level=3",
    "EVENT nightly EVERY 24 HRS DO ACTUATE TurnOff ON Lights",
    "DENATURE SENSOR therm-1 DELETE PROPERTY Temperature BLOCK appX",
    "DENATURE SENSOR cam-2 DENATURE PARAMS rate=0.5; SUMMARIZE PROPERTY Address ALLOW landlord PARAMS name=zipcode",
    'IMPORT GATEWAY "http://127.0.0.1:8800" TOKEN "s3cret"',
]

# (query, error class, 1-based offset of the offending token)
INVALID = [
    ("SENSE x FROM d DELTA 1 MINS PERIOD 5 MINS", ValidationError, 29),
    ("ACTUATE a ON b DELTA 1 MINS", ValidationError, 16),
    ("ACTUATE a ON b ERROR 2", ValidationError, 16),
    ("SENSE x FROM d PARAMS k=v", ValidationError, 16),
    ("SENSE x FROM d CARDINALITY 0", ValidationError, 28),
    ("SENSE x FROM d DELTA 1 MINS DELTA 2 MINS", ValidationError, 29),
    ("SENSE x FROM", ParseError, 13),
    ("FIND Thermometer WHERE location room1 AS T", ParseError, 33),
    ("BLINK x FROM d", ParseError, 1),
    ("SENSE x FROM d DELTA 5 PARSECS", ParseError, 24),
]


@pytest.mark.parametrize("query", GOLDEN)
def test_golden_round_trip(query):
    first = parse_query(query)
    rendered = render_query(first)
    assert parse_query(rendered) == first
    # Canonical text is a fixed point.
    assert render_query(parse_query(rendered)) == rendered


def test_paper_example_normalizes_durations():
    spec = parse_query(
        "SENSE Temperature FROM Thermometer DELTA 1 HRS ERROR 2 PERIOD 15 MINS"
    ).body
    assert spec == SenseSpec("Temperature", "Thermometer", delta=3_600_000,
                             error=2.0, period=900_000)


def test_duration_units_agree():
    asts = [parse_query(f"SENSE x FROM d DELTA {q}") for q in
            ("1 HRS", "60 MINS", "3600 SECS", "3600000 MS")]
    assert all(a.body.delta == 3_600_000 for a in asts)


def test_keywords_case_insensitive_identifiers_not():
    assert parse_query("sense x from d") == parse_query("SENSE x FROM d")
    assert parse_query("SENSE X FROM d") != parse_query("SENSE x FROM d")


def test_find_defaults():
    body = parse_query("FIND Camera AS C").body
    assert body == FindSpec("Camera", [], "C")
    assert render_query(parse_query("FIND Camera AS C")) == "FIND Camera AS C"


def test_actuate_params_preserved_in_order():
    body = parse_query("ACTUATE Set ON L PARAMS b=80,a=1").body
    assert isinstance(body, ActuateSpec)
    assert list(body.params.items()) == [("b", "80"), ("a", "1")]


def test_event_condition_and_periodic():
    cond = parse_query(
        "EVENT hot WHEN Temperature > 30 FROM T DO ACTUATE TurnOn ON Fans"
    ).body.trigger
    assert cond == Condition("Temperature", ">", 30.0, "T")
    per = parse_query("EVENT tick EVERY 5 MINS DO ACTUATE TurnOn ON L").body.trigger
    assert per == Periodic(300_000)


def test_event_body_must_be_aperiodic():
    with pytest.raises(ValidationError):
        parse_query("EVENT e EVERY 1 MINS DO ACTUATE TurnOn ON L PERIOD 1 MINS")


def test_cardinality_default_is_one():
    assert parse_query("SENSE x FROM d CARDINALITY 1") == parse_query("SENSE x FROM d")


@pytest.mark.parametrize("query,exc,offset", INVALID)
def test_invalid_queries(query, exc, offset):
    with pytest.raises(exc) as info:
        parse_query(query)
    assert info.value.offset == offset


def test_parse_error_carries_expected_set():
    with pytest.raises(ParseError) as info:
        parse_query("SENSE x")
    assert "FROM" in info.value.expected


def test_denature_rules_ordered():
    body = parse_query(
        "DENATURE SENSOR s DELETE BLOCK a; DENATURE PROPERTY p PARAMS rate=0.3"
    ).body
    assert [r.kind for r in body.rules] == ["Delete", "Denature"]
    assert body.rules[0].block == ("a",)
    assert body.rules[1].params == {"rate": "0.3"}


def test_allow_and_block_conflict():
    with pytest.raises(ValidationError):
        parse_query("DENATURE SENSOR s DELETE ALLOW a BLOCK b")


def test_trailing_garbage_rejected():
    with pytest.raises(ParseError):
        parse_query("FIND Camera AS C garbage")
