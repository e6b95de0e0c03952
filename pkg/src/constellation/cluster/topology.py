"""Pure cluster state and the decision rules the nodes execute.

Everything here is side-effect free so the failover, scaling, election,
and discovery rules can be unit tested without sockets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

HEARTBEAT_INTERVAL_MS = 1_000
MISS_THRESHOLD = 3
LEADER_LIST_REFRESH_MS = 5_000
DEFAULT_EDGE_THRESHOLD = 8
DEFAULT_MIN_LEADERS = 1


class NoLeaderAvailable(Exception):
    pass


@dataclass
class LeaderInfo:
    node_id: str
    address: str
    parent: str | None = None  # leader-tree parent node id

    def to_wire(self) -> dict:
        return {"nodeId": self.node_id, "address": self.address, "parent": self.parent}

    @classmethod
    def from_wire(cls, doc: dict) -> "LeaderInfo":
        return cls(doc["nodeId"], doc["address"], doc.get("parent"))


@dataclass
class LeaderList:
    """Registry-held lists; version bumps on every mutation."""

    active: list[LeaderInfo] = field(default_factory=list)
    potential: list[LeaderInfo] = field(default_factory=list)
    version: int = 0

    def to_wire(self) -> dict:
        return {
            "activeLeaders": [l.to_wire() for l in self.active],
            "potentialLeaders": [l.to_wire() for l in self.potential],
            "version": self.version,
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "LeaderList":
        return cls(
            [LeaderInfo.from_wire(d) for d in doc.get("activeLeaders", [])],
            [LeaderInfo.from_wire(d) for d in doc.get("potentialLeaders", [])],
            doc.get("version", 0),
        )

    def add_active(self, info: LeaderInfo) -> None:
        if any(l.node_id == info.node_id for l in self.active):
            return
        info.parent = assign_tree_parent(self.active)
        self.potential = [l for l in self.potential if l.node_id != info.node_id]
        self.active.append(info)
        self.version += 1

    def add_potential(self, info: LeaderInfo) -> None:
        known = {l.node_id for l in self.active} | {l.node_id for l in self.potential}
        if info.node_id in known:
            return
        self.potential.append(info)
        self.version += 1

    def remove_active(self, node_id: str) -> bool:
        before = len(self.active)
        self.active = [l for l in self.active if l.node_id != node_id]
        if len(self.active) != before:
            self._reparent(node_id)
            self.version += 1
            return True
        return False

    def _reparent(self, removed_id: str) -> None:
        for leader in self.active:
            if leader.parent == removed_id:
                others = [l for l in self.active if l.node_id != leader.node_id]
                leader.parent = assign_tree_parent(others)


def assign_tree_parent(active: list[LeaderInfo]) -> str | None:
    """First leader (in promotion order) with fewer than two children."""
    if not active:
        return None
    children: dict[str, int] = {l.node_id: 0 for l in active}
    for leader in active:
        if leader.parent in children:
            children[leader.parent] += 1
    for leader in active:
        if children[leader.node_id] < 2:
            return leader.node_id
    return active[-1].node_id


def tree_neighbors(leaders: list[LeaderInfo], node_id: str) -> list[str]:
    """Parent plus children of a leader in the tree."""
    out = []
    for leader in leaders:
        if leader.node_id == node_id and leader.parent is not None:
            out.append(leader.parent)
        if leader.parent == node_id:
            out.append(leader.node_id)
    return out


def tree_diameter(leaders: list[LeaderInfo]) -> int:
    """Longest path (in hops) of the leader tree; used as the hop budget."""
    ids = [l.node_id for l in leaders]
    if len(ids) <= 1:
        return 1
    adjacency = {i: tree_neighbors(leaders, i) for i in ids}

    def farthest(start: str) -> tuple[str, int]:
        seen = {start: 0}
        frontier = [start]
        while frontier:
            nxt = []
            for node in frontier:
                for peer in adjacency[node]:
                    if peer not in seen:
                        seen[peer] = seen[node] + 1
                        nxt.append(peer)
            frontier = nxt
        end = max(seen, key=lambda k: seen[k])
        return end, seen[end]

    end, _ = farthest(ids[0])
    _, dist = farthest(end)
    return max(1, dist)


# --- heartbeats ---------------------------------------------------------------

def heartbeat_failures(last_seen: dict[str, int], now_ms: int,
                       interval_ms: int = HEARTBEAT_INTERVAL_MS,
                       miss_threshold: int = MISS_THRESHOLD) -> list[str]:
    """Peers whose last heartbeat is older than miss_threshold intervals."""
    cutoff = now_ms - miss_threshold * interval_ms
    return sorted(peer for peer, seen in last_seen.items() if seen < cutoff)


# --- edge-side discovery ---------------------------------------------------------

@dataclass
class LeaderCandidate:
    node_id: str
    address: str
    rtt_ms: float
    measured_at_ms: int = 0


def join_order(candidates: list[LeaderCandidate],
               exclude: set[str] = frozenset()) -> list[LeaderCandidate]:
    """Closest-first order an edge tries to join, skipping known-dead ids."""
    viable = [c for c in candidates if c.node_id not in exclude]
    if not viable:
        raise NoLeaderAvailable("no viable leader candidates")
    return sorted(viable, key=lambda c: (c.rtt_ms, c.node_id))


# --- leader-side cluster view ------------------------------------------------------

@dataclass
class EdgeRecord:
    edge_id: str
    address: str
    last_heartbeat_ms: int
    device_ids: set[str] = field(default_factory=set)


@dataclass
class ClusterView:
    """What a leader knows about its cluster."""

    leader_id: str
    threshold: int = DEFAULT_EDGE_THRESHOLD
    edges: dict[str, EdgeRecord] = field(default_factory=dict)
    assignment: dict[str, str] = field(default_factory=dict)  # deviceId -> edgeId
    orphaned: set[str] = field(default_factory=set)

    def can_accept(self) -> bool:
        return len(self.edges) < self.threshold

    def add_edge(self, edge_id: str, address: str, now_ms: int) -> bool:
        if edge_id not in self.edges and not self.can_accept():
            return False
        self.edges.setdefault(edge_id, EdgeRecord(edge_id, address, now_ms))
        self.edges[edge_id].last_heartbeat_ms = now_ms
        return True

    def register_devices(self, edge_id: str, device_ids: list[str]) -> None:
        record = self.edges[edge_id]
        for device_id in device_ids:
            previous = self.assignment.get(device_id)
            if previous and previous in self.edges and previous != edge_id:
                self.edges[previous].device_ids.discard(device_id)
            record.device_ids.add(device_id)
            self.assignment[device_id] = edge_id
            self.orphaned.discard(device_id)

    def remove_edge(self, edge_id: str) -> EdgeRecord | None:
        return self.edges.pop(edge_id, None)


def failover_plan(view: ClusterView, failed_edge: str) -> tuple[dict[str, str], set[str]]:
    """Reassign a dead edge's devices to the least-loaded surviving edge
    (device count, ties broken by edge id).

    Returns (device -> new edge, orphaned devices). Pure: the caller
    applies the plan to the view after the transfers are sent.
    """
    record = view.edges.get(failed_edge)
    if record is None:
        return {}, set()
    devices = sorted(record.device_ids)
    survivors = [e for e in view.edges.values() if e.edge_id != failed_edge]
    if not survivors:
        return {}, set(devices)
    target = min(survivors, key=lambda e: (len(e.device_ids), e.edge_id)).edge_id
    return {device_id: target for device_id in devices}, set()


def apply_failover(view: ClusterView, failed_edge: str,
                   plan: dict[str, str], orphaned: set[str]) -> None:
    view.remove_edge(failed_edge)
    for device_id, target in plan.items():
        view.edges[target].device_ids.add(device_id)
        view.assignment[device_id] = target
    for device_id in orphaned:
        view.assignment.pop(device_id, None)
        view.orphaned.add(device_id)


# --- registry-side services ---------------------------------------------------------

def scaler_target(edge_count: int, threshold: int = DEFAULT_EDGE_THRESHOLD,
                  min_leaders: int = DEFAULT_MIN_LEADERS) -> int:
    """Leaders the deployment needs for the current edge population."""
    return max(min_leaders, math.ceil(edge_count / threshold)) if edge_count else min_leaders


def promotions_needed(active_count: int, target: int, potential: list[LeaderInfo]) -> list[LeaderInfo]:
    """Candidates the daemon should promote now, in list order."""
    deficit = max(0, target - active_count)
    return potential[:deficit]


def match_manifest(doc: dict, devtype: str, where=()) -> bool:
    """Does a manifest document satisfy a FIND-style devtype+predicates?"""
    if doc.get("devtype") != devtype:
        return False
    attributes = doc.get("attributes", {})
    return all(attributes.get(k) == v for k, v in where)
