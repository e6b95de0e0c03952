"""Per-sensor privacy policy rules and the mediator that enforces them."""

from __future__ import annotations

import json
import random
import statistics
import time
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

DELETE = "Delete"
DENATURE = "Denature"
SUMMARIZE = "Summarize"
RULE_KINDS = (DELETE, DENATURE, SUMMARIZE)

ALL = "ALL"


class PolicyError(Exception):
    pass


class NotOwner(PolicyError):
    pass


class UnknownSensor(PolicyError):
    pass


class SummarizerMissing(PolicyError):
    pass


@dataclass
class PolicyRule:
    """One delete/denature/summarize rule; rules apply first-match-wins.

    ``allow`` and ``block`` are client-id whitelists/blocklists and are
    mutually exclusive; both empty means the rule applies to every client.
    ``prop`` is a property name, or ALL.
    """

    kind: str
    prop: str = ALL
    allow: tuple[str, ...] = ()
    block: tuple[str, ...] = ()
    params: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise PolicyError(f"unknown rule kind {self.kind!r}")
        if self.allow and self.block:
            raise PolicyError("ALLOW and BLOCK are mutually exclusive in one rule")
        self.allow = tuple(self.allow)
        self.block = tuple(self.block)

    def applies_to(self, client_id: str, prop: str) -> bool:
        if self.prop != ALL and self.prop != prop:
            return False
        if self.allow:
            return client_id not in self.allow
        if self.block:
            return client_id in self.block
        return True


@dataclass
class Release:
    value: object


class Blocked:
    """Singleton-ish marker: the value must not be released to this client."""

    def __repr__(self):
        return "Blocked"

    def __eq__(self, other):
        return isinstance(other, Blocked)

    def __hash__(self):
        return hash("Blocked")


BLOCKED = Blocked()


def blur_text(text: str, rate: float, rng: random.Random) -> str:
    """Insert random characters into ``text`` at roughly ``rate`` per char.

    Always inserts at least one character, and for multi-char inputs at
    least one insertion lands strictly inside the string so the original
    never survives as one contiguous run.
    """
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789"
    n_insert = max(1, round(rate * len(text)))
    positions = [rng.randint(0, len(text)) for _ in range(n_insert)]
    if len(text) >= 2 and not any(0 < p < len(text) for p in positions):
        positions[0] = rng.randint(1, len(text) - 1)
    out = list(text)
    # Insert right-to-left so earlier positions stay valid.
    for pos in sorted(positions, reverse=True):
        out.insert(pos, rng.choice(alphabet))
    return "".join(out)


class WindowAverageSummarizer:
    """Keeps a sliding window of numeric readings per sensor, reports the mean."""

    def __init__(self, window: int = 3):
        self.window = window
        self._values: dict[str, deque] = {}

    def __call__(self, sensor_id: str, value) -> float:
        buf = self._values.setdefault(sensor_id, deque(maxlen=self.window))
        buf.append(float(value))
        return statistics.fmean(buf)


class ZipcodeSummarizer:
    """Maps a street address to its zip code via a lookup table."""

    def __init__(self, table: dict[str, str]):
        self.table = dict(table)

    def __call__(self, sensor_id: str, value) -> str:
        address = str(value)
        try:
            return self.table[address]
        except KeyError:
            raise SummarizerMissing(f"no zip code known for {address!r}") from None


def builtin_zipcode_table() -> dict[str, str]:
    """Bundled address-to-zip lookup used by the default zipcode summarizer."""
    text = resources.files("constellation.data").joinpath("zipcodes.json").read_text()
    return json.loads(text)


class PrivacyMediator:
    """Holds per-sensor rule lists and pre-processes values before release.

    Rule lists are swapped atomically by set_policy; reads take the current
    list reference so concurrent lookups never see a half-updated policy.
    """

    def __init__(self, owner_lookup: Callable[[str], str | None] | None = None,
                 blur_seed: int | None = None):
        self._policies: dict[str, tuple[PolicyRule, ...]] = {}
        self._summarizers: dict[str, Callable[[str, object], object]] = {}
        self._owner_lookup = owner_lookup
        self._rng = random.Random(blur_seed)
        self.timings: dict[str, list[float]] = {k: [] for k in RULE_KINDS}
        self.register_summarizer("average", WindowAverageSummarizer())
        self.register_summarizer("zipcode", ZipcodeSummarizer(builtin_zipcode_table()))

    def register_summarizer(self, name: str, fn: Callable[[str, object], object]):
        self._summarizers[name] = fn

    def set_policy(self, sensor_id: str, rules: list[PolicyRule], issuer: str | None = None):
        if not rules:
            raise PolicyError("rule list must be nonempty")
        if self._owner_lookup is not None and issuer is not None:
            owner = self._owner_lookup(sensor_id)
            if owner is None:
                raise UnknownSensor(sensor_id)
            if issuer != owner:
                raise NotOwner(f"{issuer} does not own {sensor_id}")
        self._policies[sensor_id] = tuple(rules)

    def clear_policy(self, sensor_id: str):
        self._policies.pop(sensor_id, None)

    def rules_for(self, sensor_id: str) -> tuple[PolicyRule, ...]:
        return self._policies.get(sensor_id, ())

    def apply_policy(self, sensor_id: str, client_id: str, prop: str, value):
        """Return Release(value') or BLOCKED after the first matching rule."""
        for rule in self._policies.get(sensor_id, ()):
            if not rule.applies_to(client_id, prop):
                continue
            start = time.perf_counter()
            try:
                if rule.kind == DELETE:
                    return BLOCKED
                if rule.kind == DENATURE:
                    return Release(self._denature(rule, value))
                return Release(self._summarize(rule, sensor_id, value))
            finally:
                self.timings[rule.kind].append(time.perf_counter() - start)
        return Release(value)

    def _denature(self, rule: PolicyRule, value):
        if "replacement" in rule.params:
            return rule.params["replacement"]
        rate = float(rule.params.get("rate", 0.5))
        return blur_text(str(value), rate, self._rng)

    def _summarize(self, rule: PolicyRule, sensor_id: str, value):
        name = rule.params.get("name", "average")
        fn = self._summarizers.get(name)
        if fn is None:
            raise SummarizerMissing(f"summarizer {name!r} is not registered")
        return fn(sensor_id, value)
