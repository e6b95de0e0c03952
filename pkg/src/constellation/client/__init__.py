"""Client connection library and CQL shell."""

from .connection import (
    ConnectFailure,
    Connection,
    ConnectionClosed,
    QueryFailure,
    Result,
    connect,
)

__all__ = [
    "ConnectFailure", "Connection", "ConnectionClosed",
    "QueryFailure", "Result", "connect",
]
