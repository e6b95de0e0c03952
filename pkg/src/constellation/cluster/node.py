"""The constellation node process: registry, leader, and edge roles.

A node holds one role at a time; an edge may be promoted to leader by the
registry daemon. Leaders supervise a cluster of edges (joins, heartbeats,
device failover) and peer with other leaders in a tree for query
propagation. Edges host the devices and the runtime engine and serve
client connections; leaders also serve clients by routing into their
cluster. The registry is the persistent store of leader lists plus the
scaler and daemon services.
"""

from __future__ import annotations

import json
import logging
import uuid
from pathlib import Path

from constellation.cql import CqlError, parse_query
from constellation.cql import ast as cql_ast
from constellation.device import DeviceRegistry, EmptySet, load_manifest
from constellation.gateway import GatewayBridge
from constellation.privacy import (
    AuthFailure,
    Envelope,
    Keystore,
    authenticate_client,
    issue_nonce,
    open_envelope,
    seal,
)
from constellation.runtime import RuntimeEngine, UnknownDevSet
from constellation.privacy.policy import PrivacyMediator

from . import messages as m
from .messages import make_msg
from .node_base import EventLoopNode, Peer, blocking_rpc, fire_and_forget, measure_rtt_ms
from .topology import (
    DEFAULT_EDGE_THRESHOLD,
    DEFAULT_MIN_LEADERS,
    HEARTBEAT_INTERVAL_MS,
    LEADER_LIST_REFRESH_MS,
    ClusterView,
    LeaderCandidate,
    LeaderInfo,
    LeaderList,
    NoLeaderAvailable,
    failover_plan,
    apply_failover,
    heartbeat_failures,
    join_order,
    match_manifest,
    promotions_needed,
    scaler_target,
    tree_diameter,
    tree_neighbors,
)

logger = logging.getLogger(__name__)

ROLE_REGISTRY = "registry"
ROLE_LEADER = "leader"
ROLE_EDGE = "edge"

SCALER_INTERVAL_MS = 2_000
DAEMON_INTERVAL_MS = 2_000
ENGINE_PUMP_MS = 100
JOIN_RETRY_MS = 2_000


class ClusterNode(EventLoopNode):
    def __init__(self, node_id: str, role: str, listen: tuple[str, int],
                 registry_addr: str | None = None,
                 bootstrap_path: str | None = None,
                 keystore_dir: str | None = None,
                 devices_dir: str | None = None,
                 threshold: int = DEFAULT_EDGE_THRESHOLD,
                 min_leaders: int = DEFAULT_MIN_LEADERS,
                 potential_leader: bool = False,
                 rtt_profile: dict[str, float] | None = None,
                 store_path: str | None = None,
                 sim_clock: bool = False,
                 advertise_host: str | None = None):
        super().__init__(node_id, listen, sim_clock=sim_clock)
        self.role = role
        self.registry_addr = registry_addr
        self.bootstrap_path = bootstrap_path
        self.threshold = threshold
        self.min_leaders = min_leaders
        self.potential_leader = potential_leader
        self.rtt_profile = rtt_profile or {}
        self.store_path = store_path
        self._advertise_host = advertise_host

        self.keystore = Keystore(keystore_dir) if keystore_dir else None
        if self.keystore and not self.keystore.has_public(node_id):
            self.keystore.generate(node_id)

        # Registry state.
        self.leader_list = LeaderList()
        self.leader_last_report: dict[str, int] = {}
        self.leader_edge_counts: dict[str, int] = {}
        self.scale_target = min_leaders

        # Leader state.
        self.registry_peer: Peer | None = None
        self.view: ClusterView | None = None
        self.manifest_docs: dict[str, dict] = {}     # deviceId -> manifest doc
        self.edge_peers: dict[str, Peer] = {}
        self.peer_last_seen: dict[str, int] = {}     # leader peers
        self.leader_peers: dict[str, Peer] = {}
        self.pending_queries: dict[str, dict] = {}
        self.seen_query_ids: set[str] = set()
        self.orphan_docs: dict[str, dict] = {}

        # Edge state.
        self.devices = DeviceRegistry()
        self.mediator = PrivacyMediator(owner_lookup=self.devices.owner_of)
        self.engine = RuntimeEngine(self.devices, mediator=self.mediator,
                                    clock=self.clock, result_sink=self._push_result)
        self.bridge = GatewayBridge(self.devices)
        self.engine.gateway_importer = self.bridge.import_gateway
        self.leader_peer: Peer | None = None
        self.leader_id: str | None = None
        self.leader_last_ack = 0
        self.leader_cache: list[LeaderCandidate] = []
        self.failed_leaders: set[str] = set()
        self.client_peers: dict[str, Peer] = {}
        self._join_state: dict | None = None

        if devices_dir:
            for path in sorted(Path(devices_dir).glob("*.json")):
                self.devices.register(load_manifest(path.read_text()))

        if role == ROLE_LEADER:
            self.view = ClusterView(node_id, threshold=threshold)

    # --- helpers -------------------------------------------------------------

    @property
    def advertised(self) -> str:
        host, port = self.listener.getsockname()[:2]
        return f"{self._advertise_host or host}:{port}"

    def _rtt_to(self, info: LeaderInfo) -> float:
        if info.node_id in self.rtt_profile:
            return float(self.rtt_profile[info.node_id])
        try:
            return measure_rtt_ms(info.address, self.node_id)
        except OSError:
            return float("inf")

    # --- startup ------------------------------------------------------------------

    def on_start(self) -> None:
        logger.info("%s starting as %s on %s", self.node_id, self.role, self.advertised)
        if self.role == ROLE_REGISTRY:
            self._registry_start()
        elif self.role == ROLE_LEADER:
            self._leader_start()
        else:
            self._edge_start()

    # ======================================================================
    # Registry role
    # ======================================================================

    def _registry_start(self) -> None:
        if self.store_path and Path(self.store_path).exists():
            lines = Path(self.store_path).read_text().strip().splitlines()
            if lines:
                self.leader_list = LeaderList.from_wire(json.loads(lines[-1]))
        self.schedule_every(SCALER_INTERVAL_MS, self._scaler_tick)
        self.schedule_every(DAEMON_INTERVAL_MS, self._daemon_tick)
        self.schedule_every(HEARTBEAT_INTERVAL_MS, self._registry_liveness_tick)

    def _persist_leaders(self) -> None:
        if self.store_path:
            with open(self.store_path, "a") as fh:
                fh.write(json.dumps(self.leader_list.to_wire()) + "\n")

    def _scaler_tick(self) -> None:
        edges = sum(self.leader_edge_counts.values())
        target = scaler_target(edges, self.threshold, self.min_leaders)
        if target != self.scale_target:
            logger.info("scaler: %d edges -> target %d leaders", edges, target)
            self.scale_target = target
            self._persist_leaders()

    def _daemon_tick(self) -> None:
        todo = promotions_needed(len(self.leader_list.active), self.scale_target,
                                 self.leader_list.potential)
        for candidate in todo:
            self.leader_list.potential = [
                l for l in self.leader_list.potential if l.node_id != candidate.node_id
            ]
            self.leader_list.version += 1
            try:
                reachable = self.connect(candidate.address, timeout_s=1.0)
            except OSError:
                logger.warning("daemon: candidate %s unreachable, dropped",
                               candidate.node_id)
                continue
            reachable.send(make_msg(m.PROMOTE, self.node_id, {}))
            self.drop_peer(reachable)
            logger.info("daemon: promoted %s", candidate.node_id)
        if todo:
            self._persist_leaders()

    def _registry_liveness_tick(self) -> None:
        failed = heartbeat_failures(self.leader_last_report, self.clock.now_ms())
        for leader_id in failed:
            self._registry_drop_leader(leader_id)

    def _registry_drop_leader(self, leader_id: str) -> None:
        self.leader_last_report.pop(leader_id, None)
        self.leader_edge_counts.pop(leader_id, None)
        if self.leader_list.remove_active(leader_id):
            logger.info("registry: leader %s removed", leader_id)
            self._persist_leaders()

    def _handle_registry(self, peer: Peer, mtype: str, payload: dict) -> bool:
        if mtype == m.REGISTER_LEADER:
            info = LeaderInfo(payload["nodeId"], payload["address"])
            if payload.get("role") == "potential":
                self.leader_list.add_potential(info)
            else:
                self.leader_list.add_active(info)
                self.leader_last_report[info.node_id] = self.clock.now_ms()
            self._persist_leaders()
            peer.send(make_msg(m.LEADER_LIST, self.node_id, self._leader_list_payload()))
            return True
        if mtype == m.LEADER_LIST_REQ:
            peer.send(make_msg(m.LEADER_LIST, self.node_id, self._leader_list_payload()))
            return True
        if mtype == m.LEADER_DOWN:
            self._registry_drop_leader(payload["leaderId"])
            return True
        if mtype == m.HEARTBEAT and payload.get("role") == ROLE_LEADER:
            sender = payload.get("nodeId", peer.ident)
            self.leader_last_report[sender] = self.clock.now_ms()
            self.leader_edge_counts[sender] = int(payload.get("edgeCount", 0))
            return True
        if mtype == m.SNAPSHOT:
            peer.send(make_msg(m.SNAPSHOT_DATA, self.node_id, {
                "role": ROLE_REGISTRY,
                "leaders": self._leader_list_payload(),
                "edgeCounts": dict(self.leader_edge_counts),
                "target": self.scale_target,
            }))
            return True
        return False

    def _leader_list_payload(self) -> dict:
        doc = self.leader_list.to_wire()
        doc["target"] = self.scale_target
        doc["hopBudget"] = tree_diameter(self.leader_list.active)
        return doc

    # ======================================================================
    # Leader role
    # ======================================================================

    def _leader_start(self) -> None:
        self.view = self.view or ClusterView(self.node_id, threshold=self.threshold)
        self._register_with_registry("active")
        self.schedule_every(HEARTBEAT_INTERVAL_MS, self._leader_heartbeat_tick)
        self.schedule_every(HEARTBEAT_INTERVAL_MS, self._leader_liveness_tick)
        self.schedule_every(LEADER_LIST_REFRESH_MS, self._leader_refresh_peers)
        self.schedule_every(ENGINE_PUMP_MS, self._pump_engine)
        self._leader_refresh_peers()

    def _registry_send(self, msg: dict) -> bool:
        """Send on the persistent registry connection, redialing if needed."""
        if not self.registry_addr:
            return False
        peer = getattr(self, "registry_peer", None)
        if peer is None or peer.closed:
            try:
                peer = self.connect(self.registry_addr, timeout_s=1.0)
            except OSError:
                return False
            self.registry_peer = peer
        peer.send(msg)
        return not peer.closed

    def _register_with_registry(self, role: str) -> None:
        self._registry_send(make_msg(
            m.REGISTER_LEADER, self.node_id,
            {"nodeId": self.node_id, "address": self.advertised, "role": role}))

    def _leader_heartbeat_tick(self) -> None:
        if self.role != ROLE_LEADER:
            return
        self._registry_send(make_msg(
            m.HEARTBEAT, self.node_id,
            {"role": ROLE_LEADER, "nodeId": self.node_id,
             "edgeCount": len(self.view.edges)}))
        for peer in list(self.leader_peers.values()):
            peer.send(make_msg(m.HEARTBEAT, self.node_id, {"role": ROLE_LEADER,
                                                           "nodeId": self.node_id}))

    def _leader_liveness_tick(self) -> None:
        if self.role != ROLE_LEADER:
            return
        now = self.clock.now_ms()
        edge_seen = {e.edge_id: e.last_heartbeat_ms for e in self.view.edges.values()}
        for edge_id in heartbeat_failures(edge_seen, now):
            self._edge_failed(edge_id)
        for peer_id in heartbeat_failures(self.peer_last_seen, now):
            self._peer_leader_failed(peer_id)

    def _leader_refresh_peers(self) -> None:
        if self.role != ROLE_LEADER:
            return
        self._registry_send(make_msg(m.LEADER_LIST_REQ, self.node_id))
        self._leader_connect_tree()

    def _leader_connect_tree(self) -> None:
        neighbors = set(tree_neighbors(self.leader_list.active, self.node_id))
        addresses = {l.node_id: l.address for l in self.leader_list.active}
        for peer_id in neighbors - set(self.leader_peers):
            if peer_id == self.node_id or peer_id not in addresses:
                continue
            try:
                peer = self.connect(addresses[peer_id], timeout_s=1.0)
            except OSError:
                continue
            peer.ident = peer_id
            self.leader_peers[peer_id] = peer
            self.peer_last_seen[peer_id] = self.clock.now_ms()
            peer.send(make_msg(m.HEARTBEAT, self.node_id,
                               {"role": ROLE_LEADER, "nodeId": self.node_id}))

    def _edge_failed(self, edge_id: str) -> None:
        logger.info("%s: edge %s failed; failing over devices", self.node_id, edge_id)
        plan, orphaned = failover_plan(self.view, edge_id)
        apply_failover(self.view, edge_id, plan, orphaned)
        peer = self.edge_peers.pop(edge_id, None)
        if peer is not None:
            self.drop_peer(peer)
        by_target: dict[str, list[dict]] = {}
        for device_id, target in plan.items():
            doc = self.manifest_docs.get(device_id)
            if doc is not None:
                by_target.setdefault(target, []).append(doc)
        for target, docs in by_target.items():
            target_peer = self.edge_peers.get(target)
            if target_peer is not None:
                target_peer.send(make_msg(m.DEVICE_FAILOVER, self.node_id,
                                          {"devices": docs, "from": edge_id}))
        for device_id in orphaned:
            if device_id in self.manifest_docs:
                self.orphan_docs[device_id] = self.manifest_docs[device_id]

    def _peer_leader_failed(self, peer_id: str) -> None:
        logger.info("%s: peer leader %s failed", self.node_id, peer_id)
        self.peer_last_seen.pop(peer_id, None)
        peer = self.leader_peers.pop(peer_id, None)
        if peer is not None:
            self.drop_peer(peer)
        self._registry_send(make_msg(m.LEADER_DOWN, self.node_id, {"leaderId": peer_id}))

    def _handle_leader(self, peer: Peer, mtype: str, payload: dict) -> bool:
        now = self.clock.now_ms()
        if mtype == m.JOIN_REQ:
            edge_id = payload["edgeId"]
            if not self.view.add_edge(edge_id, payload.get("address", ""), now):
                peer.send(make_msg(m.JOIN_REJECT, self.node_id,
                                   {"reason": f"threshold {self.view.threshold} reached"}))
                return True
            peer.ident = edge_id
            self.edge_peers[edge_id] = peer
            peer.send(make_msg(m.JOIN_ACK, self.node_id,
                               {"leaderId": self.node_id, "threshold": self.view.threshold}))
            if self.orphan_docs:
                docs = list(self.orphan_docs.values())
                ids = list(self.orphan_docs)
                self.orphan_docs.clear()
                self.view.register_devices(edge_id, ids)
                peer.send(make_msg(m.DEVICE_FAILOVER, self.node_id,
                                   {"devices": docs, "from": "orphaned"}))
            return True
        if mtype == m.DEVICE_REGISTER:
            docs = payload.get("devices", [])
            edge_id = peer.ident
            if edge_id in self.view.edges:
                for doc in docs:
                    self.manifest_docs[doc["deviceId"]] = doc
                self.view.register_devices(edge_id, [d["deviceId"] for d in docs])
            return True
        if mtype == m.HEARTBEAT:
            role = payload.get("role")
            sender = payload.get("nodeId", peer.ident)
            if role == ROLE_EDGE and sender in self.view.edges:
                self.view.edges[sender].last_heartbeat_ms = now
                peer.send(make_msg(m.HEARTBEAT, self.node_id, {"role": ROLE_LEADER,
                                                               "nodeId": self.node_id}))
            elif role == ROLE_LEADER:
                peer.ident = sender
                self.peer_last_seen[sender] = now
                self.leader_peers.setdefault(sender, peer)
            return True
        if mtype == m.LEADER_LIST:
            incoming = LeaderList.from_wire(payload)
            if incoming.version >= self.leader_list.version:
                self.leader_list = incoming
            self._leader_connect_tree()
            return True
        if mtype == m.QUERY_FWD:
            self._route_query(peer, payload)
            return True
        if mtype == m.QUERY_RESULT:
            self._on_query_result(payload)
            return True
        if mtype == m.LEADER_DOWN:
            # An edge noticed its leader die before we did; relay upstream.
            self._peer_leader_failed(payload["leaderId"])
            return True
        if mtype == m.SNAPSHOT:
            edges = {
                e.edge_id: {"address": e.address,
                            "devices": sorted(e.device_ids),
                            "lastHeartbeatMs": e.last_heartbeat_ms}
                for e in self.view.edges.values()
            }
            peer.send(make_msg(m.SNAPSHOT_DATA, self.node_id, {
                "role": ROLE_LEADER,
                "edges": edges,
                "assignment": dict(self.view.assignment),
                "orphaned": sorted(self.view.orphaned),
                "threshold": self.view.threshold,
            }))
            return True
        return False

    # --- query routing (leader) ------------------------------------------------

    def _pend(self, query_id: str, entry: dict, timeout_ms: int = 10_000) -> None:
        self.pending_queries[query_id] = entry

        def expire():
            stale = self.pending_queries.pop(query_id, None)
            if stale is not None and not stale["replied"]:
                self._send_query_result(stale["reply"], query_id, ok=False,
                                        error="query timed out in the cluster",
                                        error_class="NotFound")
        self.schedule(timeout_ms, expire)

    def _route_query(self, reply_peer: Peer, payload: dict) -> None:
        """Serve a forwarded query from this cluster or propagate up the tree."""
        query_id = payload["queryId"]
        if query_id in self.seen_query_ids:
            self._send_query_result(reply_peer, query_id, ok=False,
                                    error="duplicate propagation id", error_class="Duplicate")
            return
        self.seen_query_ids.add(query_id)

        device_ids = payload.get("deviceIds")
        if device_ids and self.role == ROLE_EDGE:
            self._execute_forwarded(reply_peer, payload)
            return

        try:
            node = parse_query(payload["cql"])
        except CqlError as exc:
            self._send_query_result(reply_peer, query_id, ok=False, error=str(exc),
                                    error_class=type(exc).__name__)
            return

        resolved = self._cluster_resolve(node)
        if resolved is not None:
            kind, data = resolved
            if kind == "find":
                self._send_query_result(reply_peer, query_id, ok=True, kind="find",
                                        devset=data)
                return
            # data: {edge_id: [device_ids]}
            self._fan_out(reply_peer, payload, data)
            return

        hops = int(payload.get("hops", 1)) - 1
        neighbors = [p for pid, p in self.leader_peers.items()
                     if p is not reply_peer and not p.closed]
        if hops <= 0 or not neighbors:
            self._send_query_result(reply_peer, query_id, ok=False,
                                    error="no device in reach satisfies the query",
                                    error_class="NotFound")
            return
        fwd = dict(payload)
        fwd["hops"] = hops
        self._pend(query_id, {"reply": reply_peer, "outstanding": len(neighbors),
                              "replied": False, "merge": None})
        for peer in neighbors:
            peer.send(make_msg(m.QUERY_FWD, self.node_id, fwd))

    def _cluster_resolve(self, node: cql_ast.QueryAst):
        """Find matching devices in this leader's cluster; None if no match."""
        body = node.body
        if isinstance(body, cql_ast.FindSpec):
            devtype, where, k = body.devtype, body.where, None
        elif isinstance(body, (cql_ast.SenseSpec, cql_ast.ActuateSpec)):
            devtype, where, k = body.target, (), body.cardinality
        else:
            return None
        matches = sorted(
            device_id for device_id, doc in self.manifest_docs.items()
            if match_manifest(doc, devtype, where) and device_id in self.view.assignment
        )
        if not matches:
            return None
        if isinstance(body, cql_ast.FindSpec):
            return "find", {"name": body.devtype, "members": matches}
        chosen = matches[:k]
        grouped: dict[str, list[str]] = {}
        for device_id in chosen:
            grouped.setdefault(self.view.assignment[device_id], []).append(device_id)
        return "execute", grouped

    def _fan_out(self, reply_peer: Peer, payload: dict, grouped: dict[str, list[str]]) -> None:
        query_id = payload["queryId"]
        live = {e: ids for e, ids in grouped.items() if e in self.edge_peers}
        if not live:
            self._send_query_result(reply_peer, query_id, ok=False,
                                    error="owning edge is not connected",
                                    error_class="NotFound")
            return
        self._pend(query_id, {"reply": reply_peer, "outstanding": len(live),
                              "replied": False,
                              "merge": {"perDevice": [], "deadlineMet": True,
                                        "shortSet": False}})
        for edge_id, ids in live.items():
            fwd = {"queryId": query_id, "cql": payload["cql"],
                   "clientId": payload.get("clientId", ""), "deviceIds": ids}
            self.edge_peers[edge_id].send(make_msg(m.QUERY_FWD, self.node_id, fwd))

    def _on_query_result(self, payload: dict) -> None:
        query_id = payload.get("queryId")
        entry = self.pending_queries.get(query_id)
        if entry is None:
            return
        merge = entry.get("merge")
        if merge is not None and payload.get("ok"):
            result = payload.get("result", {})
            merge["perDevice"].extend(result.get("perDevice", []))
            merge["deadlineMet"] = merge["deadlineMet"] and result.get("deadlineMet", True)
            merge["shortSet"] = merge["shortSet"] or result.get("shortSet", False)
            entry["outstanding"] -= 1
            if entry["outstanding"] <= 0 and not entry["replied"]:
                entry["replied"] = True
                del self.pending_queries[query_id]
                self._send_query_result(entry["reply"], query_id, ok=True, kind="task",
                                        result={"taskId": query_id, "firedAtMs":
                                                self.clock.now_ms(),
                                                "perDevice": merge["perDevice"],
                                                "deadlineMet": merge["deadlineMet"],
                                                "shortSet": merge["shortSet"]})
            return
        if payload.get("ok") and not entry["replied"]:
            entry["replied"] = True
            del self.pending_queries[query_id]
            out = dict(payload)
            self._forward_result(entry["reply"], out)
            return
        entry["outstanding"] -= 1
        if entry["outstanding"] <= 0 and not entry["replied"]:
            del self.pending_queries[query_id]
            self._send_query_result(entry["reply"], query_id, ok=False,
                                    error=payload.get("error", "not found"),
                                    error_class=payload.get("errorClass", "NotFound"))

    def _forward_result(self, reply_peer: Peer, payload: dict) -> None:
        if reply_peer.client_id is not None:
            self._client_reply(reply_peer, payload)
        else:
            reply_peer.send(make_msg(m.QUERY_RESULT, self.node_id, payload))

    def _send_query_result(self, reply_peer: Peer, query_id: str, ok: bool,
                           kind: str = "task", result=None, devset=None,
                           error: str | None = None, error_class: str | None = None) -> None:
        payload = {"queryId": query_id, "ok": ok, "kind": kind}
        if result is not None:
            payload["result"] = result
        if devset is not None:
            payload["devset"] = devset
        if error is not None:
            payload["error"] = error
            payload["errorClass"] = error_class or "Error"
        self._forward_result(reply_peer, payload)

    # ======================================================================
    # Edge role
    # ======================================================================

    def _edge_start(self) -> None:
        if self.potential_leader:
            self._register_with_registry("potential")
        self.schedule_every(HEARTBEAT_INTERVAL_MS, self._edge_heartbeat_tick)
        self.schedule_every(HEARTBEAT_INTERVAL_MS, self._edge_liveness_tick)
        self.schedule_every(LEADER_LIST_REFRESH_MS, self._edge_refresh_leaders)
        self.schedule_every(ENGINE_PUMP_MS, self._pump_engine)
        self.schedule_every(HEARTBEAT_INTERVAL_MS, self._sleep_tick)
        self._edge_refresh_leaders()
        self._edge_join()

    def _pump_engine(self) -> None:
        self.engine.run_due()

    def _sleep_tick(self) -> None:
        self.devices.sleep_tick(self.clock.now_ms())

    def _fetch_leader_list(self) -> list[LeaderInfo]:
        if self.registry_addr:
            try:
                reply = blocking_rpc(self.registry_addr,
                                     make_msg(m.LEADER_LIST_REQ, self.node_id),
                                     timeout_s=1.0)
                incoming = LeaderList.from_wire(reply["payload"])
                if incoming.version >= self.leader_list.version:
                    self.leader_list = incoming
                return list(self.leader_list.active)
            except (OSError, KeyError, json.JSONDecodeError, ConnectionError):
                logger.warning("%s: registry unreachable, trying bootstrap file",
                               self.node_id)
        if self.bootstrap_path and Path(self.bootstrap_path).exists():
            leaders = []
            for line in Path(self.bootstrap_path).read_text().splitlines():
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                node_id, _, address = line.partition(" ")
                leaders.append(LeaderInfo(node_id, address.strip()))
            return leaders
        return list(self.leader_list.active)

    def _edge_refresh_leaders(self) -> None:
        if self.role != ROLE_EDGE:
            return
        infos = self._fetch_leader_list()
        now = self.clock.now_ms()
        cache: list[LeaderCandidate] = []
        for info in infos:
            rtt = self._rtt_to(info)
            if rtt != float("inf"):
                cache.append(LeaderCandidate(info.node_id, info.address, rtt, now))
        cache.sort(key=lambda c: (c.rtt_ms, c.node_id))
        self.leader_cache = cache
        self.failed_leaders &= {c.node_id for c in cache}

    def _edge_join(self) -> None:
        if self.role != ROLE_EDGE or self.leader_peer is not None:
            return
        try:
            candidates = join_order(self.leader_cache, exclude=self.failed_leaders)
        except NoLeaderAvailable:
            self.schedule(JOIN_RETRY_MS, self._edge_retry_join)
            return
        self._join_state = {"candidates": candidates, "index": 0}
        self._join_attempt()

    def _edge_retry_join(self) -> None:
        if self.role == ROLE_EDGE and self.leader_peer is None:
            self._edge_refresh_leaders()
            self._edge_join()

    def _join_attempt(self) -> None:
        state = self._join_state
        if state is None:
            return
        candidates, index = state["candidates"], state["index"]
        if index >= len(candidates):
            self._join_state = None
            self.schedule(JOIN_RETRY_MS, self._edge_retry_join)
            return
        candidate = candidates[index]
        try:
            peer = self.connect(candidate.address, timeout_s=1.0)
        except OSError:
            state["index"] += 1
            self._join_attempt()
            return
        peer.ident = candidate.node_id
        state["peer"] = peer
        peer.send(make_msg(m.JOIN_REQ, self.node_id,
                           {"edgeId": self.node_id, "address": self.advertised}))

    def _edge_heartbeat_tick(self) -> None:
        if self.role == ROLE_EDGE and self.leader_peer is not None:
            self.leader_peer.send(make_msg(m.HEARTBEAT, self.node_id,
                                           {"role": ROLE_EDGE, "nodeId": self.node_id}))

    def _edge_liveness_tick(self) -> None:
        if self.role != ROLE_EDGE or self.leader_peer is None:
            return
        if heartbeat_failures({"leader": self.leader_last_ack}, self.clock.now_ms()):
            self._leader_lost()

    def _leader_lost(self) -> None:
        if self.leader_peer is None:
            return
        lost = self.leader_id
        logger.info("%s: leader %s lost; reconnecting", self.node_id, lost)
        self.drop_peer(self.leader_peer)
        self.leader_peer = None
        self.leader_id = None
        if lost:
            self.failed_leaders.add(lost)
            if self.registry_addr:
                fire_and_forget(self.registry_addr,
                                make_msg(m.LEADER_DOWN, self.node_id, {"leaderId": lost}))
        self._edge_join()

    def _handle_edge(self, peer: Peer, mtype: str, payload: dict) -> bool:
        if mtype == m.JOIN_ACK:
            self.leader_peer = peer
            self.leader_id = payload["leaderId"]
            self.leader_last_ack = self.clock.now_ms()
            self._join_state = None
            docs = [mf.to_document() for mf in self.devices.manifests()]
            if docs:
                peer.send(make_msg(m.DEVICE_REGISTER, self.node_id, {"devices": docs}))
            logger.info("%s: joined leader %s", self.node_id, self.leader_id)
            return True
        if mtype == m.JOIN_REJECT:
            state = self._join_state
            if state is not None:
                self.drop_peer(state.get("peer", peer))
                state["index"] += 1
                self._join_attempt()
            return True
        if mtype == m.HEARTBEAT and payload.get("role") == ROLE_LEADER:
            self.leader_last_ack = self.clock.now_ms()
            return True
        if mtype == m.LEADER_LIST:
            incoming = LeaderList.from_wire(payload)
            if incoming.version >= self.leader_list.version:
                self.leader_list = incoming
            return True
        if mtype == m.DEVICE_FAILOVER:
            added = []
            for doc in payload.get("devices", []):
                manifest = load_manifest(doc)
                try:
                    self.devices.unregister(manifest.device_id)
                except Exception:
                    pass
                self.devices.register(manifest)
                added.append(manifest.to_document())
            if added and self.leader_peer is not None:
                self.leader_peer.send(make_msg(m.DEVICE_REGISTER, self.node_id,
                                               {"devices": added}))
            logger.info("%s: adopted %d failed-over devices", self.node_id, len(added))
            return True
        if mtype == m.PROMOTE:
            self._become_leader()
            return True
        if mtype == m.QUERY_FWD:
            self._execute_forwarded(peer, payload)
            return True
        return False

    def _execute_forwarded(self, reply_peer: Peer, payload: dict) -> None:
        query_id = payload["queryId"]
        try:
            node = parse_query(payload["cql"])
            device_ids = payload.get("deviceIds")
            if device_ids:
                result = self.engine.execute_direct(node.body, payload.get("clientId", ""),
                                                    device_ids)
            else:
                outcome = self.engine.submit(node, payload.get("clientId", ""))
                results = self.engine.run_due()
                mine = [r for r in results if outcome.task and r.task_id == outcome.task.task_id]
                result = mine[0] if mine else None
            if result is None:
                raise RuntimeError("no result produced")
            reply_peer.send(make_msg(m.QUERY_RESULT, self.node_id,
                                     {"queryId": query_id, "ok": True, "kind": "task",
                                      "result": result.to_wire()}))
        except Exception as exc:
            reply_peer.send(make_msg(m.QUERY_RESULT, self.node_id,
                                     {"queryId": query_id, "ok": False,
                                      "error": str(exc),
                                      "errorClass": type(exc).__name__}))

    def _become_leader(self) -> None:
        logger.info("%s: promoted to leader", self.node_id)
        if self.leader_peer is not None:
            self.drop_peer(self.leader_peer)
            self.leader_peer = None
            self.leader_id = None
        self.role = ROLE_LEADER
        self.view = ClusterView(self.node_id, threshold=self.threshold)
        self._leader_start()

    # ======================================================================
    # Client plane (leader and edge)
    # ======================================================================

    def _handle_client(self, peer: Peer, mtype: str, payload: dict) -> bool:
        if mtype == m.AUTH_REQ:
            peer.auth_nonce = issue_nonce()
            peer.send(make_msg(m.AUTH_CHALLENGE, self.node_id,
                               {"nonce": peer.auth_nonce}))
            return True
        if mtype == m.AUTH_PROOF:
            if self.keystore is None:
                peer.send(make_msg(m.AUTH_ERR, self.node_id,
                                   {"reason": "node has no keystore"}))
                return True
            try:
                client_id = authenticate_client(payload, self.keystore,
                                                peer.auth_nonce or "")
            except AuthFailure as exc:
                peer.send(make_msg(m.AUTH_ERR, self.node_id, {"reason": str(exc)}))
                self.schedule(0, lambda: self.drop_peer(peer))
                return True
            peer.client_id = client_id
            peer.auth_nonce = None
            self.client_peers[client_id] = peer
            peer.send(make_msg(m.AUTH_OK, self.node_id, {"nodeId": self.node_id}))
            return True
        if mtype == m.QUERY:
            if peer.client_id is None:
                peer.send(make_msg(m.AUTH_ERR, self.node_id,
                                   {"reason": "not authenticated"}))
                return True
            try:
                plain = self._open_client_payload(peer, payload)
            except Exception as exc:
                peer.send(make_msg(m.AUTH_ERR, self.node_id, {"reason": str(exc)}))
                return True
            self._client_query(peer, plain)
            return True
        if mtype == m.CANCEL_ALL:
            count = self.engine.cancel_client(peer.client_id) if peer.client_id else 0
            peer.send(make_msg(m.CANCEL_COUNT, self.node_id, {"count": count}))
            return True
        return False

    def _open_client_payload(self, peer: Peer, payload: dict) -> dict:
        envelope = Envelope.from_wire(payload["envelope"])
        if envelope.sender_id != peer.client_id:
            raise AuthFailure("envelope sender does not match session")
        plaintext = open_envelope(envelope,
                                  self.keystore.public_key(peer.client_id),
                                  self.keystore.private_key(self.node_id))
        return json.loads(plaintext)

    def _client_reply(self, peer: Peer, payload: dict, mtype: str = m.QUERY_RESULT) -> None:
        if peer.client_id is None or peer.closed:
            return
        body = json.dumps(payload).encode()
        envelope = seal(body, self.node_id, self.keystore.private_key(self.node_id),
                        self.keystore.public_key(peer.client_id))
        peer.send(make_msg(mtype, self.node_id, {"envelope": envelope.to_wire()}))

    def _client_query(self, peer: Peer, plain: dict) -> None:
        query_id = plain.get("queryId") or uuid.uuid4().hex
        text = plain.get("cql", "")
        try:
            outcome = self.engine.submit(text, peer.client_id)
        except (UnknownDevSet, EmptySet) as exc:
            self._route_client_miss(peer, query_id, text, exc)
            return
        except CqlError as exc:
            self._client_reply(peer, {"queryId": query_id, "ok": False,
                                      "error": str(exc),
                                      "errorClass": type(exc).__name__,
                                      "offset": getattr(exc, "offset", None)})
            return
        except Exception as exc:
            self._client_reply(peer, {"queryId": query_id, "ok": False,
                                      "error": str(exc),
                                      "errorClass": type(exc).__name__})
            return
        if outcome.kind == "find":
            self._client_reply(peer, {"queryId": query_id, "ok": True, "kind": "find",
                                      "devset": {"name": outcome.devset.name,
                                                 "members": outcome.devset.members}})
            return
        if outcome.kind == "policy":
            self._client_reply(peer, {"queryId": query_id, "ok": True, "kind": "policy"})
            return
        if outcome.kind == "import":
            self._client_reply(peer, {"queryId": query_id, "ok": True, "kind": "import",
                                      "imported": outcome.imported})
            return
        task = outcome.task
        if task.period_ms > 0 or task.kind == "Event":
            self._client_reply(peer, {"queryId": query_id, "ok": True, "kind": "task",
                                      "taskId": task.task_id, "periodic": True})
            return
        results = self.engine.run_due()
        mine = [r for r in results if r.task_id == task.task_id]
        self._client_reply(peer, {"queryId": query_id, "ok": True, "kind": "task",
                                  "taskId": task.task_id,
                                  "result": mine[0].to_wire() if mine else None})

    def _route_client_miss(self, peer: Peer, query_id: str, text: str, exc) -> None:
        """The local node cannot resolve the devset; route through the cluster."""
        try:
            node = parse_query(text)
        except CqlError as parse_exc:
            self._client_reply(peer, {"queryId": query_id, "ok": False,
                                      "error": str(parse_exc),
                                      "errorClass": type(parse_exc).__name__})
            return
        periodic = getattr(node.body, "period", None)
        if periodic:
            self._client_reply(peer, {
                "queryId": query_id, "ok": False,
                "error": "periodic tasks must be issued at a node owning the devset",
                "errorClass": type(exc).__name__})
            return
        payload = {"queryId": query_id, "cql": text, "clientId": peer.client_id,
                   "hops": max(2, tree_diameter(self.leader_list.active) + 1)}
        self.seen_query_ids.add(query_id)
        if self.role == ROLE_LEADER:
            resolved = self._cluster_resolve(node)
            if resolved is not None:
                kind, data = resolved
                if kind == "find":
                    self._send_query_result(peer, query_id, ok=True, kind="find",
                                            devset=data)
                else:
                    self._fan_out(peer, payload, data)
                return
            neighbors = [p for p in self.leader_peers.values() if not p.closed]
            if not neighbors:
                self._client_reply(peer, {"queryId": query_id, "ok": False,
                                          "error": str(exc),
                                          "errorClass": type(exc).__name__})
                return
            self._pend(query_id, {"reply": peer, "outstanding": len(neighbors),
                                  "replied": False, "merge": None})
            for neighbor in neighbors:
                neighbor.send(make_msg(m.QUERY_FWD, self.node_id, payload))
            return
        if self.leader_peer is None:
            self._client_reply(peer, {"queryId": query_id, "ok": False,
                                      "error": str(exc),
                                      "errorClass": type(exc).__name__})
            return
        self._pend(query_id, {"reply": peer, "outstanding": 1,
                              "replied": False, "merge": None})
        self.leader_peer.send(make_msg(m.QUERY_FWD, self.node_id, payload))

    def _push_result(self, client_id: str, result) -> None:
        peer = self.client_peers.get(client_id)
        if peer is not None and not peer.closed:
            self._client_reply(peer, {"taskId": result.task_id,
                                      "result": result.to_wire()},
                               mtype=m.TASK_RESULT)

    # ======================================================================
    # Dispatch and disconnects
    # ======================================================================

    def handle(self, peer: Peer, mtype: str, payload: dict, msg: dict) -> None:
        if self.role == ROLE_REGISTRY:
            if self._handle_registry(peer, mtype, payload):
                return
        if self.role == ROLE_LEADER:
            if self._handle_leader(peer, mtype, payload):
                return
            if self._handle_client(peer, mtype, payload):
                return
            if mtype == m.QUERY_RESULT:
                self._on_query_result(payload)
                return
        if self.role == ROLE_EDGE:
            if self._handle_edge(peer, mtype, payload):
                return
            if self._handle_client(peer, mtype, payload):
                return
            if mtype == m.QUERY_RESULT:
                self._on_query_result(payload)
                return
        logger.debug("%s(%s): ignoring %s", self.node_id, self.role, mtype)

    def on_disconnect(self, peer: Peer) -> None:
        if self.role == ROLE_EDGE and peer is self.leader_peer:
            self._leader_lost()
            return
        if self.role == ROLE_LEADER:
            if peer.ident in self.view.edges and self.edge_peers.get(peer.ident) is peer:
                self._edge_failed(peer.ident)
                return
            if peer.ident in self.leader_peers and self.leader_peers[peer.ident] is peer:
                self._peer_leader_failed(peer.ident)
                return
        if peer.client_id is not None:
            self.engine.cancel_client(peer.client_id)
            self.client_peers.pop(peer.client_id, None)
