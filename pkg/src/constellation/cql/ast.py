"""AST node types produced by the CQL parser."""

from __future__ import annotations

from dataclasses import dataclass, field

from constellation.privacy.policy import PolicyRule

FIND = "Find"
SENSE = "Sense"
ACTUATE = "Actuate"
EVENT = "Event"
DENATURE = "Denature"
GATEWAY_IMPORT = "GatewayImport"


@dataclass
class FindSpec:
    """FIND devtype [WHERE a=v,...] AS alias"""

    devtype: str
    where: list[tuple[str, str]] = field(default_factory=list)
    alias: str = ""


@dataclass
class SenseSpec:
    """SENSE property FROM target with optional DELTA/ERROR/PERIOD/DEADLINE/CARDINALITY."""

    prop: str
    target: str
    delta: int | None = None        # ms
    error: float | None = None      # in the property's units
    period: int | None = None       # ms; None = one-shot
    deadline: int | None = None     # ms
    cardinality: int = 1


@dataclass
class ActuateSpec:
    """ACTUATE action ON target with optional PARAMS/PERIOD/DEADLINE/CARDINALITY."""

    action: str
    target: str
    params: dict[str, str] = field(default_factory=dict)
    period: int | None = None
    deadline: int | None = None
    cardinality: int = 1


@dataclass
class Condition:
    """Threshold trigger: property <cmp> threshold over a devset."""

    prop: str
    comparator: str  # one of < > <= >= ==
    threshold: float
    target: str


@dataclass
class Periodic:
    period: int  # ms


@dataclass
class EventSpec:
    """EVENT name WHEN ... DO <actuate>  |  EVENT name EVERY n UNIT DO <actuate>"""

    name: str
    trigger: Condition | Periodic
    body: ActuateSpec


@dataclass
class DenatureSpec:
    """DENATURE SENSOR id rule[; rule]*"""

    sensor_id: str
    rules: list[PolicyRule]


@dataclass
class GatewayImportSpec:
    """IMPORT GATEWAY "url" [TOKEN "tok"]"""

    url: str
    token: str | None = None


Body = FindSpec | SenseSpec | ActuateSpec | EventSpec | DenatureSpec | GatewayImportSpec

_KIND_OF = {
    FindSpec: FIND,
    SenseSpec: SENSE,
    ActuateSpec: ACTUATE,
    EventSpec: EVENT,
    DenatureSpec: DENATURE,
    GatewayImportSpec: GATEWAY_IMPORT,
}


@dataclass
class QueryAst:
    """A parsed statement: ``kind`` names which spec type ``body`` holds."""

    kind: str
    body: Body

    def __post_init__(self):
        expected = _KIND_OF[type(self.body)]
        if self.kind != expected:
            raise ValueError(f"kind {self.kind!r} does not match body type {expected!r}")


def make_ast(body: Body) -> QueryAst:
    return QueryAst(_KIND_OF[type(body)], body)
