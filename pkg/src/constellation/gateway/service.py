"""Mock gateway service speaking the thing REST protocol over HTTP.

Endpoints:
    GET  /things
    GET  /things/{id}/properties/{name}
    PUT  /things/{id}/properties/{name}     body {"<name>": value}
    POST /things/{id}/actions/{name}        body {"<name>": {params}} or {params}

An optional static bearer token gates every request.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from constellation.device import load_manifest
from constellation.runtime.clock import Clock, SystemClock

from .things import (
    PropertyTypeMismatch,
    ReadOnlyProperty,
    Thing,
    UnknownThing,
    UnknownThingAction,
    UnknownThingProperty,
)

logger = logging.getLogger(__name__)


class GatewayState:
    """Thing table shared by the request handlers."""

    def __init__(self, clock: Clock | None = None, token: str | None = None):
        self.clock = clock or SystemClock()
        self.token = token
        self._things: dict[str, Thing] = {}
        self._lock = threading.Lock()

    def add_thing(self, manifest) -> Thing:
        thing = Thing(manifest)
        with self._lock:
            self._things[thing.thing_id] = thing
        return thing

    def load_directory(self, directory: str | Path) -> int:
        count = 0
        for path in sorted(Path(directory).glob("*.json")):
            self.add_thing(load_manifest(path.read_text()))
            count += 1
        return count

    def thing(self, thing_id: str) -> Thing:
        with self._lock:
            thing = self._things.get(thing_id)
        if thing is None:
            raise UnknownThing(thing_id)
        return thing

    def ledger(self) -> list[dict]:
        now = self.clock.now_ms()
        with self._lock:
            things = list(self._things.values())
        return [t.describe(now).to_wire() for t in things]


class _Handler(BaseHTTPRequestHandler):
    state: GatewayState  # injected by make_server

    def log_message(self, fmt, *args):
        logger.debug("gateway http: " + fmt, *args)

    def _reply(self, code: int, doc) -> None:
        body = json.dumps(doc).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _authorized(self) -> bool:
        if self.state.token is None:
            return True
        return self.headers.get("Authorization") == f"Bearer {self.state.token}"

    def _route(self):
        parts = [p for p in self.path.split("/") if p]
        if not self._authorized():
            self._reply(401, {"error": "unauthorized"})
            return None
        return parts

    def do_GET(self):
        parts = self._route()
        if parts is None:
            return
        try:
            if parts == ["things"]:
                self._reply(200, self.state.ledger())
            elif len(parts) == 4 and parts[0] == "things" and parts[2] == "properties":
                thing = self.state.thing(parts[1])
                value = thing.get_property(parts[3], self.state.clock.now_ms())
                self._reply(200, {parts[3]: value})
            else:
                self._reply(404, {"error": f"no route {self.path}"})
        except (UnknownThing, UnknownThingProperty) as exc:
            self._reply(404, {"error": str(exc)})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length))

    def do_PUT(self):
        parts = self._route()
        if parts is None:
            return
        if len(parts) != 4 or parts[0] != "things" or parts[2] != "properties":
            self._reply(404, {"error": f"no route {self.path}"})
            return
        name = parts[3]
        try:
            body = self._read_body()
            if name not in body:
                self._reply(400, {"error": f"body must contain {name!r}"})
                return
            thing = self.state.thing(parts[1])
            thing.put_property(name, body[name])
            self._reply(200, {name: thing.get_property(name, self.state.clock.now_ms())})
        except (UnknownThing, UnknownThingProperty) as exc:
            self._reply(404, {"error": str(exc)})
        except (ReadOnlyProperty, PropertyTypeMismatch, json.JSONDecodeError) as exc:
            self._reply(400, {"error": str(exc)})

    def do_POST(self):
        parts = self._route()
        if parts is None:
            return
        if len(parts) != 4 or parts[0] != "things" or parts[2] != "actions":
            self._reply(404, {"error": f"no route {self.path}"})
            return
        name = parts[3]
        try:
            body = self._read_body()
            params = body.get(name, body)
            if not isinstance(params, dict):
                self._reply(400, {"error": "action params must be an object"})
                return
            self.state.thing(parts[1]).invoke_action(name, params)
            self._reply(201, {name: "done"})
        except (UnknownThing, UnknownThingAction) as exc:
            self._reply(404, {"error": str(exc)})
        except json.JSONDecodeError as exc:
            self._reply(400, {"error": str(exc)})


class GatewayServer:
    """Thread-hosted HTTP server around a GatewayState."""

    def __init__(self, state: GatewayState, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundHandler", (_Handler,), {"state": state})
        self.state = state
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "GatewayServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
