"""Client connection: authenticated, enveloped queries over the node protocol.

One-shot queries block for their TaskResult; periodic queries return a
task id immediately and stream TaskResults which are read from
``next_result``. Closing cancels all server-side tasks for this client.
"""

from __future__ import annotations

import json
import queue
import socket
import threading
import uuid
from dataclasses import dataclass, field

from constellation.cluster import messages as m
from constellation.cluster.messages import make_msg, recv_msg, send_msg
from constellation.privacy import (
    AuthFailure,
    Envelope,
    Keystore,
    make_hello,
    open_envelope,
    seal,
)


class ConnectFailure(Exception):
    pass


class ConnectionClosed(Exception):
    pass


class QueryFailure(Exception):
    def __init__(self, message: str, error_class: str = "Error", offset=None):
        self.error_class = error_class
        self.offset = offset
        super().__init__(message)


@dataclass
class Result:
    ok: bool
    kind: str = "task"
    task_id: str | None = None
    periodic: bool = False
    result: dict | None = None          # TaskResult wire document
    devset: dict | None = None
    imported: list[str] = field(default_factory=list)
    error: str | None = None
    error_class: str | None = None
    offset: int | None = None

    @classmethod
    def from_payload(cls, doc: dict) -> "Result":
        return cls(
            ok=doc.get("ok", False),
            kind=doc.get("kind", "task"),
            task_id=doc.get("taskId"),
            periodic=doc.get("periodic", False),
            result=doc.get("result"),
            devset=doc.get("devset"),
            imported=doc.get("imported", []),
            error=doc.get("error"),
            error_class=doc.get("errorClass"),
            offset=doc.get("offset"),
        )


class Connection:
    def __init__(self, address: str, client_id: str, keystore: Keystore | str,
                 timeout_s: float = 10.0):
        self.address = address
        self.client_id = client_id
        self.keystore = keystore if isinstance(keystore, Keystore) else Keystore(keystore)
        self.timeout_s = timeout_s
        self.open = False
        self.node_id: str | None = None
        self.task_ids: list[str] = []
        self._pending: dict[str, queue.Queue] = {}
        self._streams: dict[str, queue.Queue] = {}
        self._lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._reader: threading.Thread | None = None
        self._connect()

    # --- lifecycle --------------------------------------------------------------

    def _connect(self) -> None:
        host, _, port = self.address.rpartition(":")
        try:
            sock = socket.create_connection((host, int(port)), timeout=self.timeout_s)
        except OSError as exc:
            raise ConnectFailure(f"{self.address}: {exc}") from None
        try:
            send_msg(sock, make_msg(m.AUTH_REQ, self.client_id,
                                    {"clientId": self.client_id}))
            challenge = recv_msg(sock)
            if challenge.get("type") != m.AUTH_CHALLENGE:
                raise AuthFailure(f"unexpected reply {challenge.get('type')}")
            nonce = challenge["payload"]["nonce"]
            hello = make_hello(self.client_id, nonce,
                               self.keystore.private_key(self.client_id))
            send_msg(sock, make_msg(m.AUTH_PROOF, self.client_id, hello))
            verdict = recv_msg(sock)
            if verdict.get("type") != m.AUTH_OK:
                raise AuthFailure(verdict.get("payload", {}).get("reason", "refused"))
            self.node_id = verdict["payload"]["nodeId"]
        except (AuthFailure, KeyError):
            sock.close()
            raise
        except OSError as exc:
            sock.close()
            raise ConnectFailure(str(exc)) from None
        sock.settimeout(None)
        self._sock = sock
        self.open = True
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def close(self) -> int:
        """Cancel all of this client's tasks and shut the socket; idempotent."""
        if not self.open:
            return 0
        count = 0
        try:
            send_msg(self._sock, make_msg(m.CANCEL_ALL, self.client_id, {}))
            reply = self._wait_control(m.CANCEL_COUNT)
            count = reply.get("count", 0) if reply else 0
        except (OSError, ConnectionError):
            count = 0
        self.open = False
        try:
            self._sock.close()
        except OSError:
            pass
        if self._reader is not None:
            self._reader.join(timeout=2)
        return count

    # --- queries -----------------------------------------------------------------

    def query(self, text: str, timeout_s: float | None = None) -> Result:
        if not self.open:
            raise ConnectionClosed("connection is closed")
        query_id = uuid.uuid4().hex
        waiter: queue.Queue = queue.Queue()
        with self._lock:
            self._pending[query_id] = waiter
        plaintext = json.dumps({"queryId": query_id, "cql": text}).encode()
        envelope = seal(plaintext, self.client_id,
                        self.keystore.private_key(self.client_id),
                        self.keystore.public_key(self.node_id))
        send_msg(self._sock, make_msg(m.QUERY, self.client_id,
                                      {"envelope": envelope.to_wire()}))
        try:
            payload = waiter.get(timeout=timeout_s or self.timeout_s)
        except queue.Empty:
            with self._lock:
                self._pending.pop(query_id, None)
            raise QueryFailure("query timed out", "Timeout") from None
        result = Result.from_payload(payload)
        if result.task_id:
            self.task_ids.append(result.task_id)
            if result.periodic:
                with self._lock:
                    self._streams.setdefault(result.task_id, queue.Queue())
        return result

    def next_result(self, task_id: str, timeout_s: float = 10.0) -> dict:
        """Blocks for the next streamed TaskResult of a periodic task."""
        with self._lock:
            stream = self._streams.setdefault(task_id, queue.Queue())
        try:
            return stream.get(timeout=timeout_s)
        except queue.Empty:
            raise QueryFailure(f"no result for {task_id} within {timeout_s}s",
                               "Timeout") from None

    # --- reader ---------------------------------------------------------------------

    def _wait_control(self, expect_type: str, timeout_s: float = 5.0):
        waiter: queue.Queue = queue.Queue()
        with self._lock:
            self._pending[expect_type] = waiter
        try:
            return waiter.get(timeout=timeout_s)
        except queue.Empty:
            return None

    def _read_loop(self) -> None:
        sock = self._sock
        try:
            while True:
                msg = recv_msg(sock)
                self._on_message(msg)
        except (ConnectionError, OSError, ValueError):
            pass
        self.open = False
        with self._lock:
            pendings = list(self._pending.values())
            self._pending.clear()
        for waiter in pendings:
            waiter.put({"ok": False, "error": "connection closed",
                        "errorClass": "ConnectionClosed"})

    def _on_message(self, msg: dict) -> None:
        mtype = msg.get("type")
        payload = msg.get("payload", {})
        if mtype == m.CANCEL_COUNT:
            with self._lock:
                waiter = self._pending.pop(m.CANCEL_COUNT, None)
            if waiter:
                waiter.put(payload)
            return
        if mtype in (m.QUERY_RESULT, m.TASK_RESULT):
            if "envelope" in payload:
                envelope = Envelope.from_wire(payload["envelope"])
                plaintext = open_envelope(
                    envelope,
                    self.keystore.public_key(self.node_id),
                    self.keystore.private_key(self.client_id),
                )
                payload = json.loads(plaintext)
            if mtype == m.QUERY_RESULT:
                query_id = payload.get("queryId")
                with self._lock:
                    waiter = self._pending.pop(query_id, None)
                if waiter:
                    waiter.put(payload)
                return
            task_id = payload.get("taskId")
            with self._lock:
                stream = self._streams.setdefault(task_id, queue.Queue())
            stream.put(payload.get("result"))


def connect(address: str, client_id: str, keystore: Keystore | str,
            timeout_s: float = 10.0) -> Connection:
    """Authenticate against a node and return an open Connection."""
    return Connection(address, client_id, keystore, timeout_s)
