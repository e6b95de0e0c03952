"""Recursive-descent parser and canonical pretty-printer for CQL.

One statement per parse. Statements are keyword-led; modifiers may appear
in any order after the mandatory clause and each at most once. Durations
are normalized to milliseconds.
"""

from __future__ import annotations

from constellation.privacy.policy import PolicyRule

from . import ast
from .errors import ParseError, ValidationError
from .lexer import EOF, IDENT, KEYWORDS, NUMBER, STRING, UNIT_MS, Token, tokenize

_COMPARATORS = {"<", ">", "<=", ">=", "=="}
_MODIFIER_KEYWORDS = ("DELTA", "ERROR", "PERIOD", "DEADLINE", "CARDINALITY", "PARAMS")
_RULE_KINDS = {"DELETE": "Delete", "DENATURE": "Denature", "SUMMARIZE": "Summarize"}


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    # --- token plumbing ---------------------------------------------------

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.cur
        self.pos += 1
        return tok

    def accept(self, kind: str) -> Token | None:
        if self.cur.kind == kind:
            return self.advance()
        return None

    def expect(self, kind: str, what: str | None = None) -> Token:
        if self.cur.kind != kind:
            raise ParseError(
                f"unexpected {self.cur.text or 'end of input'!r}",
                self.cur.offset,
                expected={what or kind},
            )
        return self.advance()

    def ident(self, what: str) -> str:
        # Keywords are not reserved: every identifier slot is a mandatory
        # single token, so accepting them stays unambiguous (gateway things
        # often expose properties like "on").
        if self.cur.kind != IDENT and self.cur.kind not in KEYWORDS:
            raise ParseError(
                f"unexpected {self.cur.text or 'end of input'!r}",
                self.cur.offset,
                expected={what},
            )
        return self.advance().text

    def number(self, what: str) -> Token:
        if self.cur.kind != NUMBER:
            raise ParseError(
                f"unexpected {self.cur.text or 'end of input'!r}",
                self.cur.offset,
                expected={what},
            )
        return self.advance()

    # --- shared pieces ----------------------------------------------------

    def duration_ms(self) -> int:
        tok = self.number("duration")
        unit = self.cur
        if unit.kind not in UNIT_MS:
            raise ParseError(
                f"unexpected {unit.text or 'end of input'!r}",
                unit.offset,
                expected=set(UNIT_MS),
            )
        self.advance()
        ms = tok.value * UNIT_MS[unit.kind]
        if ms <= 0:
            raise ValidationError("duration must be positive", tok.offset)
        return int(round(ms))

    def value_text(self) -> str:
        tok = self.cur
        if tok.kind == STRING:
            self.advance()
            return str(tok.value)
        if tok.kind in (IDENT, NUMBER) or tok.kind in KEYWORDS:
            self.advance()
            return tok.text
        raise ParseError(
            f"unexpected {tok.text or 'end of input'!r}",
            tok.offset,
            expected={"value"},
        )

    def kv_pairs(self) -> dict[str, str]:
        pairs: dict[str, str] = {}
        while True:
            key = self.ident("parameter name")
            self.expect("=")
            pairs[key] = self.value_text()
            if not self.accept(","):
                return pairs

    def modifiers(self) -> dict[str, tuple[object, int]]:
        """Parse trailing keyword modifiers; returns name -> (value, offset)."""
        seen: dict[str, tuple[object, int]] = {}
        while self.cur.kind in _MODIFIER_KEYWORDS:
            tok = self.advance()
            if tok.kind in seen:
                raise ValidationError(f"duplicate {tok.kind} modifier", tok.offset)
            if tok.kind in ("DELTA", "PERIOD", "DEADLINE"):
                seen[tok.kind] = (self.duration_ms(), tok.offset)
            elif tok.kind == "ERROR":
                seen[tok.kind] = (self.number("error tolerance").value, tok.offset)
            elif tok.kind == "CARDINALITY":
                num = self.number("cardinality")
                if num.value != int(num.value) or num.value < 1:
                    raise ValidationError("cardinality must be a positive integer", num.offset)
                seen[tok.kind] = (int(num.value), tok.offset)
            else:  # PARAMS
                seen[tok.kind] = (self.kv_pairs(), tok.offset)
        return seen

    @staticmethod
    def reject_modifiers(mods: dict, allowed: set[str], statement: str):
        for name, (_, offset) in mods.items():
            if name not in allowed:
                raise ValidationError(f"{name} is not allowed on {statement}", offset)

    # --- statements -------------------------------------------------------

    def statement(self) -> ast.QueryAst:
        tok = self.cur
        if tok.kind == "FIND":
            body = self.find()
        elif tok.kind == "SENSE":
            body = self.sense()
        elif tok.kind == "ACTUATE":
            body = self.actuate()
        elif tok.kind == "EVENT":
            body = self.event()
        elif tok.kind == "DENATURE":
            body = self.denature()
        elif tok.kind == "IMPORT":
            body = self.gateway_import()
        else:
            raise ParseError(
                f"unexpected {tok.text or 'end of input'!r}",
                tok.offset,
                expected={"FIND", "SENSE", "ACTUATE", "EVENT", "DENATURE", "IMPORT"},
            )
        self.expect(EOF, "end of statement")
        return ast.make_ast(body)

    def find(self) -> ast.FindSpec:
        self.expect("FIND")
        devtype = self.ident("device type")
        where: list[tuple[str, str]] = []
        if self.accept("WHERE"):
            while True:
                attr = self.ident("attribute name")
                self.expect("=")
                where.append((attr, self.value_text()))
                if not self.accept(","):
                    break
        self.expect("AS")
        alias = self.ident("alias")
        return ast.FindSpec(devtype, where, alias)

    def sense(self) -> ast.SenseSpec:
        self.expect("SENSE")
        prop = self.ident("property")
        self.expect("FROM")
        target = self.ident("device set")
        mods = self.modifiers()
        self.reject_modifiers(mods, {"DELTA", "ERROR", "PERIOD", "DEADLINE", "CARDINALITY"}, "SENSE")
        spec = ast.SenseSpec(
            prop,
            target,
            delta=mods.get("DELTA", (None, 0))[0],
            error=mods.get("ERROR", (None, 0))[0],
            period=mods.get("PERIOD", (None, 0))[0],
            deadline=mods.get("DEADLINE", (None, 0))[0],
            cardinality=mods.get("CARDINALITY", (1, 0))[0],
        )
        if spec.error is not None and spec.error < 0:
            raise ValidationError("ERROR must be nonnegative", mods["ERROR"][1])
        if spec.period is not None and spec.delta is not None and spec.period > spec.delta:
            raise ValidationError("PERIOD exceeds DELTA; the cache could never be used",
                                  mods["PERIOD"][1])
        return spec

    def actuate(self) -> ast.ActuateSpec:
        self.expect("ACTUATE")
        action = self.ident("action")
        self.expect("ON")
        target = self.ident("device set")
        mods = self.modifiers()
        self.reject_modifiers(mods, {"PARAMS", "PERIOD", "DEADLINE", "CARDINALITY"}, "ACTUATE")
        return ast.ActuateSpec(
            action,
            target,
            params=mods.get("PARAMS", ({}, 0))[0],
            period=mods.get("PERIOD", (None, 0))[0],
            deadline=mods.get("DEADLINE", (None, 0))[0],
            cardinality=mods.get("CARDINALITY", (1, 0))[0],
        )

    def event(self) -> ast.EventSpec:
        self.expect("EVENT")
        name = self.ident("event name")
        tok = self.cur
        if self.accept("WHEN"):
            prop = self.ident("property")
            cmp_tok = self.cur
            if cmp_tok.kind not in _COMPARATORS:
                raise ParseError(
                    f"unexpected {cmp_tok.text or 'end of input'!r}",
                    cmp_tok.offset,
                    expected=_COMPARATORS,
                )
            self.advance()
            threshold = self.number("threshold").value
            self.expect("FROM")
            target = self.ident("device set")
            trigger: ast.Condition | ast.Periodic = ast.Condition(prop, cmp_tok.kind, threshold, target)
        elif self.accept("EVERY"):
            trigger = ast.Periodic(self.duration_ms())
        else:
            raise ParseError(
                f"unexpected {tok.text or 'end of input'!r}",
                tok.offset,
                expected={"WHEN", "EVERY"},
            )
        do_tok = self.expect("DO")
        body = self.actuate()
        if body.period is not None:
            raise ValidationError("PERIOD is not allowed on an EVENT body", do_tok.offset)
        return ast.EventSpec(name, trigger, body)

    def denature(self) -> ast.DenatureSpec:
        self.expect("DENATURE")
        self.expect("SENSOR")
        sensor_id = self.ident("sensor id")
        rules = [self.policy_rule()]
        while self.accept(";"):
            rules.append(self.policy_rule())
        return ast.DenatureSpec(sensor_id, rules)

    def policy_rule(self) -> PolicyRule:
        tok = self.cur
        if tok.kind not in _RULE_KINDS:
            raise ParseError(
                f"unexpected {tok.text or 'end of input'!r}",
                tok.offset,
                expected=set(_RULE_KINDS),
            )
        self.advance()
        prop = "ALL"
        allow: tuple[str, ...] = ()
        block: tuple[str, ...] = ()
        params: dict[str, str] = {}
        seen: set[str] = set()
        while self.cur.kind in ("PROPERTY", "ALLOW", "BLOCK", "PARAMS"):
            mod = self.advance()
            if mod.kind in seen or (mod.kind in ("ALLOW", "BLOCK") and seen & {"ALLOW", "BLOCK"}):
                raise ValidationError(f"conflicting {mod.kind} clause", mod.offset)
            seen.add(mod.kind)
            if mod.kind == "PROPERTY":
                prop = self.ident("property")
            elif mod.kind in ("ALLOW", "BLOCK"):
                ids = [self.ident("client id")]
                while self.accept(","):
                    ids.append(self.ident("client id"))
                if mod.kind == "ALLOW":
                    allow = tuple(ids)
                else:
                    block = tuple(ids)
            else:
                params = self.kv_pairs()
        return PolicyRule(_RULE_KINDS[tok.kind], prop=prop, allow=allow, block=block, params=params)

    def gateway_import(self) -> ast.GatewayImportSpec:
        self.expect("IMPORT")
        self.expect("GATEWAY")
        url = self.expect(STRING, "gateway url").value
        token = None
        if self.accept("TOKEN"):
            token = self.expect(STRING, "token").value
        return ast.GatewayImportSpec(str(url), token)


def parse_query(text: str) -> ast.QueryAst:
    """Parse a single CQL statement into a QueryAst."""
    return _Parser(text).statement()


# --- rendering -------------------------------------------------------------

def _num(x: float) -> str:
    return str(int(x)) if float(x) == int(x) else repr(float(x))


def _value(text: str) -> str:
    """Render a WHERE/PARAMS value, quoting when it would not re-lex bare."""
    try:
        toks = tokenize(text)
    except Exception:
        toks = []
    if (len(toks) == 2 and toks[0].text == text
            and (toks[0].kind in (IDENT, NUMBER) or toks[0].kind in KEYWORDS)):
        return text
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _kv(pairs) -> str:
    return ",".join(f"{k}={_value(v)}" for k, v in pairs)


def render_query(node: ast.QueryAst) -> str:
    """Render a QueryAst to canonical text; parse(render(a)) == a."""
    body = node.body
    if isinstance(body, ast.FindSpec):
        out = f"FIND {body.devtype}"
        if body.where:
            out += " WHERE " + _kv(body.where)
        return out + f" AS {body.alias}"
    if isinstance(body, ast.SenseSpec):
        out = f"SENSE {body.prop} FROM {body.target}"
        if body.delta is not None:
            out += f" DELTA {body.delta} MS"
        if body.error is not None:
            out += f" ERROR {_num(body.error)}"
        out += _common_tail(body)
        return out
    if isinstance(body, ast.ActuateSpec):
        return _render_actuate(body)
    if isinstance(body, ast.EventSpec):
        if isinstance(body.trigger, ast.Condition):
            t = body.trigger
            head = f"EVENT {body.name} WHEN {t.prop} {t.comparator} {_num(t.threshold)} FROM {t.target}"
        else:
            head = f"EVENT {body.name} EVERY {body.trigger.period} MS"
        return head + " DO " + _render_actuate(body.body)
    if isinstance(body, ast.DenatureSpec):
        return f"DENATURE SENSOR {body.sensor_id} " + "; ".join(
            _render_rule(r) for r in body.rules
        )
    if isinstance(body, ast.GatewayImportSpec):
        out = f'IMPORT GATEWAY {_quote(body.url)}'
        if body.token is not None:
            out += f" TOKEN {_quote(body.token)}"
        return out
    raise TypeError(f"cannot render {body!r}")


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _common_tail(body) -> str:
    out = ""
    if body.period is not None:
        out += f" PERIOD {body.period} MS"
    if body.deadline is not None:
        out += f" DEADLINE {body.deadline} MS"
    if body.cardinality != 1:
        out += f" CARDINALITY {body.cardinality}"
    return out


def _render_actuate(body: ast.ActuateSpec) -> str:
    out = f"ACTUATE {body.action} ON {body.target}"
    if body.params:
        out += " PARAMS " + _kv(body.params.items())
    return out + _common_tail(body)


def _render_rule(rule: PolicyRule) -> str:
    out = rule.kind.upper()
    if rule.prop != "ALL":
        out += f" PROPERTY {rule.prop}"
    if rule.allow:
        out += " ALLOW " + ",".join(rule.allow)
    if rule.block:
        out += " BLOCK " + ",".join(rule.block)
    if rule.params:
        out += " PARAMS " + _kv(rule.params.items())
    return out
