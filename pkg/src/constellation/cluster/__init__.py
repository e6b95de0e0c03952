"""Leader/edge/registry cluster fabric and its wire protocol."""

from . import messages
from .node import ClusterNode, ROLE_EDGE, ROLE_LEADER, ROLE_REGISTRY
from .node_base import blocking_rpc, fire_and_forget, measure_rtt_ms
from .topology import (
    ClusterView,
    LeaderCandidate,
    LeaderInfo,
    LeaderList,
    NoLeaderAvailable,
    failover_plan,
    apply_failover,
    heartbeat_failures,
    join_order,
    promotions_needed,
    scaler_target,
    tree_diameter,
    tree_neighbors,
)

__all__ = [
    "messages",
    "ClusterNode", "ROLE_EDGE", "ROLE_LEADER", "ROLE_REGISTRY",
    "blocking_rpc", "fire_and_forget", "measure_rtt_ms",
    "ClusterView", "LeaderCandidate", "LeaderInfo", "LeaderList",
    "NoLeaderAvailable", "failover_plan", "apply_failover",
    "heartbeat_failures", "join_order", "promotions_needed",
    "scaler_target", "tree_diameter", "tree_neighbors",
]
