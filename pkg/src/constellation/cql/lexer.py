"""Tokenizer for CQL statements.

Keywords are case-insensitive; identifiers are case-sensitive and follow
``[A-Za-z_][A-Za-z0-9_-]*``. Token offsets are 1-based character positions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError

KEYWORDS = {
    "FIND", "SENSE", "ACTUATE", "EVENT", "DENATURE", "IMPORT", "GATEWAY",
    "SENSOR", "FROM", "ON", "AS", "WHERE", "DO", "WHEN", "EVERY", "TOKEN",
    "PARAMS", "DELTA", "ERROR", "PERIOD", "DEADLINE", "CARDINALITY",
    "DELETE", "SUMMARIZE", "ALLOW", "BLOCK", "PROPERTY",
    "MS", "SECS", "MINS", "HRS",
}

UNIT_MS = {"MS": 1, "SECS": 1_000, "MINS": 60_000, "HRS": 3_600_000}

IDENT = "IDENT"
NUMBER = "NUMBER"
STRING = "STRING"
EOF = "EOF"

_PUNCT = {"=", ",", ";", "<", ">", "<=", ">=", "=="}


@dataclass
class Token:
    kind: str      # keyword name, IDENT, NUMBER, STRING, punct literal, or EOF
    text: str
    value: object  # float for NUMBER, unquoted text for STRING, else text
    offset: int    # 1-based


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch in "_-"


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        start = i
        if _is_ident_start(ch):
            while i < n and _is_ident_char(text[i]):
                i += 1
            word = text[start:i]
            upper = word.upper()
            if upper in KEYWORDS:
                tokens.append(Token(upper, word, upper, start + 1))
            else:
                tokens.append(Token(IDENT, word, word, start + 1))
        elif ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            i += 1
            while i < n and (text[i].isdigit() or text[i] == "."):
                i += 1
            lexeme = text[start:i]
            try:
                value = float(lexeme)
            except ValueError:
                raise ParseError(f"malformed number {lexeme!r}", start + 1) from None
            tokens.append(Token(NUMBER, lexeme, value, start + 1))
        elif ch == '"':
            i += 1
            chars: list[str] = []
            while i < n and text[i] != '"':
                if text[i] == "\\" and i + 1 < n:
                    i += 1
                chars.append(text[i])
                i += 1
            if i >= n:
                raise ParseError("unterminated string", start + 1)
            i += 1
            tokens.append(Token(STRING, text[start:i], "".join(chars), start + 1))
        elif text[start:start + 2] in _PUNCT:
            i += 2
            tokens.append(Token(text[start:i], text[start:i], text[start:i], start + 1))
        elif ch in _PUNCT:
            i += 1
            tokens.append(Token(ch, ch, ch, start + 1))
        else:
            raise ParseError(f"unexpected character {ch!r}", start + 1)
    tokens.append(Token(EOF, "", None, n + 1))
    return tokens
