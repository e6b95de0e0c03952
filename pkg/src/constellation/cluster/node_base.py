"""Single-event-loop TCP node: framed peers, clock-driven timers.

Each node is one process with one selector loop; all state mutation
happens inside message and timer handlers. With a simulated clock the
loop idles until the scenario coordinator advances time with CLOCK_SET;
FLUSH lets the coordinator wait until every in-flight message is drained.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import selectors
import socket
import time

from constellation.runtime.clock import SimClock, SystemClock

from . import messages as m
from .messages import FrameBuffer, encode_frame, make_msg

logger = logging.getLogger(__name__)


class Peer:
    """One framed TCP connection."""

    def __init__(self, sock: socket.socket, addr):
        self.sock = sock
        self.addr = addr
        self.buffer = FrameBuffer()
        self.ident: str | None = None      # sender id once seen
        self.client_id: str | None = None  # set after client auth
        self.auth_nonce: str | None = None
        self.closed = False

    def send(self, msg: dict) -> None:
        if self.closed:
            return
        try:
            self.sock.sendall(encode_frame(msg))
        except OSError:
            self.closed = True

    def close(self) -> None:
        self.closed = True
        try:
            self.sock.close()
        except OSError:
            pass

    def __repr__(self):
        return f"Peer({self.ident or self.addr})"


class EventLoopNode:
    def __init__(self, node_id: str, listen: tuple[str, int], sim_clock: bool = False):
        self.node_id = node_id
        self.clock = SimClock() if sim_clock else SystemClock()
        self.sim_mode = sim_clock
        self.sel = selectors.DefaultSelector()
        self.listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.listener.bind(listen)
        self.listener.listen(64)
        self.sel.register(self.listener, selectors.EVENT_READ, None)
        self.peers: dict[int, Peer] = {}
        self._timers: list[tuple[int, int, object]] = []
        self._timer_seq = itertools.count()
        self.running = False

    # --- addresses -----------------------------------------------------------

    @property
    def address(self) -> str:
        host, port = self.listener.getsockname()[:2]
        return f"{host}:{port}"

    # --- timers ----------------------------------------------------------------

    def schedule(self, delay_ms: int, fn) -> None:
        at = self.clock.now_ms() + max(0, delay_ms)
        heapq.heappush(self._timers, (at, next(self._timer_seq), fn))

    def schedule_every(self, interval_ms: int, fn) -> None:
        def tick():
            fn()
            if self.running:
                self.schedule(interval_ms, tick)
        self.schedule(interval_ms, tick)

    def _run_due_timers(self) -> None:
        now = self.clock.now_ms()
        while self._timers and self._timers[0][0] <= now:
            _, _, fn = heapq.heappop(self._timers)
            try:
                fn()
            except Exception:
                logger.exception("%s: timer handler failed", self.node_id)

    # --- connections ----------------------------------------------------------

    def connect(self, address: str, timeout_s: float = 3.0) -> Peer:
        host, _, port = address.rpartition(":")
        sock = socket.create_connection((host, int(port)), timeout=timeout_s)
        sock.settimeout(None)
        peer = Peer(sock, address)
        self.peers[sock.fileno()] = peer
        self.sel.register(sock, selectors.EVENT_READ, peer)
        return peer

    def drop_peer(self, peer: Peer) -> None:
        fd = peer.sock.fileno()
        try:
            self.sel.unregister(peer.sock)
        except (KeyError, ValueError):
            pass
        self.peers.pop(fd, None)
        peer.close()

    def _accept(self) -> None:
        sock, addr = self.listener.accept()
        sock.settimeout(None)
        peer = Peer(sock, f"{addr[0]}:{addr[1]}")
        self.peers[sock.fileno()] = peer
        self.sel.register(sock, selectors.EVENT_READ, peer)

    def _read(self, peer: Peer) -> None:
        try:
            data = peer.sock.recv(65536)
        except OSError:
            data = b""
        if not data:
            self.drop_peer(peer)
            self.on_disconnect(peer)
            return
        try:
            msgs = peer.buffer.feed(data)
        except Exception:
            logger.exception("%s: bad frame from %s", self.node_id, peer)
            self.drop_peer(peer)
            return
        for msg in msgs:
            peer.ident = msg.get("sender", peer.ident)
            self._dispatch(peer, msg)

    # --- dispatch ----------------------------------------------------------------

    def _dispatch(self, peer: Peer, msg: dict) -> None:
        mtype = msg.get("type")
        payload = msg.get("payload", {})
        if mtype == m.CLOCK_SET:
            self.clock.advance_to(int(payload["nowMs"]))
            self._run_due_timers()
            peer.send(make_msg(m.CLOCK_ACK, self.node_id, {"nowMs": self.clock.now_ms()}))
            return
        if mtype == m.FLUSH:
            self._drain()
            peer.send(make_msg(m.FLUSH_ACK, self.node_id))
            return
        if mtype == m.STOP:
            self.running = False
            return
        if mtype == m.RTT_PING:
            peer.send(make_msg(m.RTT_PONG, self.node_id, payload))
            return
        try:
            self.handle(peer, mtype, payload, msg)
        except Exception:
            logger.exception("%s: handler for %s failed", self.node_id, mtype)

    def _drain(self, max_rounds: int = 200) -> None:
        """Process everything already readable before acking a FLUSH."""
        for _ in range(max_rounds):
            events = self.sel.select(timeout=0)
            if not events:
                return
            for key, _ in events:
                if key.data is None:
                    self._accept()
                else:
                    self._read(key.data)

    # --- main loop ------------------------------------------------------------------

    def run(self) -> None:
        self.running = True
        self.on_start()
        while self.running:
            timeout = None
            if not self.sim_mode:
                self._run_due_timers()
                if self._timers:
                    timeout = max(0.0, (self._timers[0][0] - self.clock.now_ms()) / 1000)
                    timeout = min(timeout, 0.25)
                else:
                    timeout = 0.25
            events = self.sel.select(timeout=timeout)
            for key, _ in events:
                if key.data is None:
                    self._accept()
                else:
                    self._read(key.data)
        self.shutdown()

    def shutdown(self) -> None:
        for peer in list(self.peers.values()):
            peer.close()
        try:
            self.sel.unregister(self.listener)
        except (KeyError, ValueError):
            pass
        self.listener.close()
        self.sel.close()

    # --- override points --------------------------------------------------------------

    def on_start(self) -> None:
        pass

    def on_disconnect(self, peer: Peer) -> None:
        pass

    def handle(self, peer: Peer, mtype: str, payload: dict, msg: dict) -> None:
        logger.warning("%s: unhandled message %s", self.node_id, mtype)


def blocking_rpc(address: str, msg: dict, timeout_s: float = 3.0) -> dict:
    """One-shot request/response on a fresh connection."""
    host, _, port = address.rpartition(":")
    with socket.create_connection((host, int(port)), timeout=timeout_s) as sock:
        m.send_msg(sock, msg)
        return m.recv_msg(sock)


def fire_and_forget(address: str, msg: dict, timeout_s: float = 1.0) -> bool:
    """Best-effort send on a fresh connection; no reply expected."""
    host, _, port = address.rpartition(":")
    try:
        with socket.create_connection((host, int(port)), timeout=timeout_s) as sock:
            m.send_msg(sock, msg)
        return True
    except OSError:
        return False


def measure_rtt_ms(address: str, node_id: str, timeout_s: float = 2.0) -> float:
    start = time.perf_counter()
    blocking_rpc(address, make_msg(m.RTT_PING, node_id), timeout_s)
    return (time.perf_counter() - start) * 1000.0
