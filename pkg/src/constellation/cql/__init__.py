"""Constellation Query Language: lexer, parser, validator, pretty-printer."""

from . import ast
from .errors import CqlError, ParseError, ValidationError
from .parser import parse_query, render_query

__all__ = [
    "ast",
    "CqlError",
    "ParseError",
    "ValidationError",
    "parse_query",
    "render_query",
]
