"""Length-prefixed JSON frames and the cluster message vocabulary.

Every message is {type, version, sender, payload} serialized as UTF-8
JSON behind a 4-byte big-endian length prefix.
"""

from __future__ import annotations

import json
import socket
import struct

PROTOCOL_VERSION = 1
_HEADER = struct.Struct("!I")
MAX_FRAME = 16 * 1024 * 1024

# Cluster control plane.
JOIN_REQ = "JOIN_REQ"
JOIN_ACK = "JOIN_ACK"
JOIN_REJECT = "JOIN_REJECT"
HEARTBEAT = "HEARTBEAT"
DEVICE_REGISTER = "DEVICE_REGISTER"
DEVICE_FAILOVER = "DEVICE_FAILOVER"
LEADER_LIST = "LEADER_LIST"
LEADER_LIST_REQ = "LEADER_LIST_REQ"
REGISTER_LEADER = "REGISTER_LEADER"
LEADER_DOWN = "LEADER_DOWN"
PROMOTE = "PROMOTE"
QUERY_FWD = "QUERY_FWD"
QUERY_RESULT = "QUERY_RESULT"
RTT_PING = "RTT_PING"
RTT_PONG = "RTT_PONG"

# Client plane (same framing).
AUTH_REQ = "AUTH_REQ"
AUTH_CHALLENGE = "AUTH_CHALLENGE"
AUTH_PROOF = "AUTH_PROOF"
AUTH_OK = "AUTH_OK"
AUTH_ERR = "AUTH_ERR"
QUERY = "QUERY"
TASK_RESULT = "TASK_RESULT"
CANCEL_ALL = "CANCEL_ALL"
CANCEL_COUNT = "CANCEL_COUNT"

# Harness control plane.
CLOCK_SET = "CLOCK_SET"
CLOCK_ACK = "CLOCK_ACK"
FLUSH = "FLUSH"
FLUSH_ACK = "FLUSH_ACK"
SNAPSHOT = "SNAPSHOT"
SNAPSHOT_DATA = "SNAPSHOT_DATA"
STOP = "STOP"


class FrameError(Exception):
    pass


def make_msg(msg_type: str, sender: str, payload: dict | None = None) -> dict:
    return {"type": msg_type, "version": PROTOCOL_VERSION,
            "sender": sender, "payload": payload or {}}


def encode_frame(msg: dict) -> bytes:
    body = json.dumps(msg, separators=(",", ":")).encode()
    if len(body) > MAX_FRAME:
        raise FrameError(f"frame of {len(body)} bytes exceeds limit")
    return _HEADER.pack(len(body)) + body


class FrameBuffer:
    """Accumulates stream bytes and yields complete decoded messages."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[dict]:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < _HEADER.size:
                return out
            (length,) = _HEADER.unpack(self._buf[:_HEADER.size])
            if length > MAX_FRAME:
                raise FrameError(f"frame of {length} bytes exceeds limit")
            end = _HEADER.size + length
            if len(self._buf) < end:
                return out
            body = bytes(self._buf[_HEADER.size:end])
            del self._buf[:end]
            out.append(json.loads(body))


def recv_msg(sock: socket.socket) -> dict:
    """Blocking read of exactly one frame (bootstrap-time RPCs only)."""
    header = _recv_exact(sock, _HEADER.size)
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise FrameError(f"frame of {length} bytes exceeds limit")
    return json.loads(_recv_exact(sock, length))


def send_msg(sock: socket.socket, msg: dict) -> None:
    sock.sendall(encode_frame(msg))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed")
        buf += chunk
    return buf
