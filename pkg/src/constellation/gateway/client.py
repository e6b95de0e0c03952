"""HTTP client for gateway things, with call counters for offload checks."""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from .things import ThingDescription


class GatewayUnreachable(Exception):
    pass


class GatewayRequestError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(f"{status}: {message}")


@dataclass
class GatewayClient:
    base_url: str
    token: str | None = None
    timeout_s: float = 5.0
    gets: int = field(default=0)
    puts: int = field(default=0)
    posts: int = field(default=0)

    def _request(self, method: str, path: str, body: dict | None = None):
        url = self.base_url.rstrip("/") + path
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(url, data=data, method=method)
        req.add_header("Content-Type", "application/json")
        if self.token:
            req.add_header("Authorization", f"Bearer {self.token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return json.loads(resp.read() or b"{}")
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode(errors="replace")
            try:
                detail = json.loads(detail).get("error", detail)
            except json.JSONDecodeError:
                pass
            raise GatewayRequestError(exc.code, detail) from None
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise GatewayUnreachable(f"{url}: {exc}") from None

    def fetch_ledger(self) -> list[ThingDescription]:
        self.gets += 1
        return [ThingDescription.from_wire(doc) for doc in self._request("GET", "/things")]

    def get_property(self, thing_id: str, name: str):
        self.gets += 1
        doc = self._request("GET", f"/things/{thing_id}/properties/{name}")
        return doc[name]

    def put_property(self, thing_id: str, name: str, value) -> None:
        self.puts += 1
        self._request("PUT", f"/things/{thing_id}/properties/{name}", {name: value})

    def invoke_action(self, thing_id: str, action: str, params: dict) -> None:
        self.posts += 1
        self._request("POST", f"/things/{thing_id}/actions/{action}", {action: dict(params)})
