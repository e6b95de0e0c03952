"""Pure cluster rules: joins, heartbeats, failover, scaler, daemon, tree."""


import pytest

from constellation.cluster.topology import (
    ClusterView,
    LeaderCandidate,
    LeaderInfo,
    LeaderList,
    NoLeaderAvailable,
    apply_failover,
    assign_tree_parent,
    failover_plan,
    heartbeat_failures,
    join_order,
    match_manifest,
    promotions_needed,
    scaler_target,
    tree_diameter,
    tree_neighbors,
)


def make_view(edges, threshold=8):
    view = ClusterView("L1", threshold=threshold)
    for edge_id, devices in edges.items():
        view.add_edge(edge_id, f"{edge_id}:0", now_ms=0)
        view.register_devices(edge_id, devices)
    return view


# --- join order ----------------------------------------------------------------

def test_join_picks_min_rtt():
    order = join_order([
        LeaderCandidate("L1", "a:1", 5.0),
        LeaderCandidate("L2", "a:2", 20.0),
    ])
    assert [c.node_id for c in order] == ["L1", "L2"]


def test_join_skips_excluded_leader():
    order = join_order([
        LeaderCandidate("L2", "a:2", 10.0),
        LeaderCandidate("L3", "a:3", 8.0),
    ], exclude={"L3"})
    assert order[0].node_id == "L2"


def test_no_viable_candidates_raises():
    with pytest.raises(NoLeaderAvailable):
        join_order([LeaderCandidate("L1", "a:1", 5.0)], exclude={"L1"})


# --- heartbeats ------------------------------------------------------------------

def test_silent_for_three_intervals_fails():
    last = {"E1": 0, "E2": 2_500}
    assert heartbeat_failures(last, now_ms=3_001) == ["E1"]


def test_all_fresh_is_empty():
    last = {"E1": 9_000, "E2": 9_500}
    assert heartbeat_failures(last, now_ms=10_000) == []


def test_boundary_exactly_three_intervals_is_alive():
    assert heartbeat_failures({"E1": 0}, now_ms=3_000) == []
    assert heartbeat_failures({"E1": 0}, now_ms=3_001) == ["E1"]


# --- failover ---------------------------------------------------------------------

def test_failover_single_survivor():
    view = make_view({"E1": ["D1"], "E2": []})
    plan, orphaned = failover_plan(view, "E1")
    assert plan == {"D1": "E2"} and orphaned == set()


def test_failover_least_loaded_survivor():
    view = make_view({"E1": ["D1", "D2"], "E2": ["D3"], "E3": []})
    plan, orphaned = failover_plan(view, "E1")
    assert plan == {"D1": "E3", "D2": "E3"} and orphaned == set()
    # Exhaustive check over all candidate targets: E3 starts least loaded.
    loads = {"E2": 1, "E3": 0}
    chosen = set(plan.values())
    assert chosen == {min(sorted(loads), key=lambda e: (loads[e], e))}


def test_failover_tie_breaks_lexicographically():
    view = make_view({"E1": ["D1", "D2"], "E2": [], "E3": []})
    plan, _ = failover_plan(view, "E1")
    assert sorted(set(plan.values())) == ["E2"]


def test_single_edge_cluster_orphans_devices():
    view = make_view({"E1": ["D1", "D2"]})
    plan, orphaned = failover_plan(view, "E1")
    assert plan == {} and orphaned == {"D1", "D2"}
    apply_failover(view, "E1", plan, orphaned)
    assert view.orphaned == {"D1", "D2"}
    assert view.assignment == {}


def test_apply_failover_keeps_single_assignment():
    view = make_view({"E1": ["D1", "D2"], "E2": ["D3"], "E3": []})
    plan, orphaned = failover_plan(view, "E1")
    apply_failover(view, "E1", plan, orphaned)
    owners = list(view.assignment.values())
    assert set(view.assignment) == {"D1", "D2", "D3"}
    assert all(owner in view.edges for owner in owners)
    for edge_id, record in view.edges.items():
        for device_id in record.device_ids:
            assert view.assignment[device_id] == edge_id


def test_threshold_respected_on_join():
    view = ClusterView("L1", threshold=2)
    assert view.add_edge("E1", "a:1", 0)
    assert view.add_edge("E2", "a:2", 0)
    assert not view.add_edge("E3", "a:3", 0)
    assert len(view.edges) == 2


# --- scaler / daemon -----------------------------------------------------------------

def test_scaler_17_edges_threshold_8_needs_3():
    assert scaler_target(17, threshold=8, min_leaders=1) == 3


def test_scaler_zero_edges_is_min():
    assert scaler_target(0, threshold=8, min_leaders=1) == 1
    assert scaler_target(0, threshold=8, min_leaders=2) == 2


def test_scaler_exact_multiple():
    assert scaler_target(8, threshold=8) == 1
    assert scaler_target(9, threshold=8) == 2


def test_daemon_promotes_first_potential():
    potential = [LeaderInfo("P1", "p:1"), LeaderInfo("P2", "p:2")]
    todo = promotions_needed(active_count=1, target=2, potential=potential)
    assert [l.node_id for l in todo] == ["P1"]


def test_daemon_noop_when_satisfied_or_empty():
    assert promotions_needed(2, 2, [LeaderInfo("P1", "p:1")]) == []
    assert promotions_needed(0, 2, []) == []


def test_daemon_promotes_next_after_unreachable():
    # The node layer drops unreachable candidates and asks again.
    potential = [LeaderInfo("P1", "p:1"), LeaderInfo("P2", "p:2")]
    first = promotions_needed(1, 2, potential)[0]
    assert first.node_id == "P1"
    remaining = [l for l in potential if l.node_id != "P1"]
    assert promotions_needed(1, 2, remaining)[0].node_id == "P2"


# --- leader list and tree ---------------------------------------------------------------

def test_leader_list_version_monotone():
    leaders = LeaderList()
    versions = [leaders.version]
    leaders.add_active(LeaderInfo("L1", "a:1"))
    versions.append(leaders.version)
    leaders.add_potential(LeaderInfo("P1", "p:1"))
    versions.append(leaders.version)
    leaders.remove_active("L1")
    versions.append(leaders.version)
    assert versions == sorted(versions) and len(set(versions)) == len(versions)


def test_active_and_potential_disjoint():
    leaders = LeaderList()
    leaders.add_potential(LeaderInfo("P1", "p:1"))
    leaders.add_active(LeaderInfo("P1", "p:1"))
    assert [l.node_id for l in leaders.active] == ["P1"]
    assert leaders.potential == []


def test_tree_parent_first_with_capacity():
    active = []
    for node_id in ("L1", "L2", "L3", "L4"):
        info = LeaderInfo(node_id, f"{node_id}:0", parent=assign_tree_parent(active))
        active.append(info)
    assert [l.parent for l in active] == [None, "L1", "L1", "L2"]
    assert sorted(tree_neighbors(active, "L1")) == ["L2", "L3"]
    assert sorted(tree_neighbors(active, "L2")) == ["L1", "L4"]
    assert tree_diameter(active) == 3  # L3 - L1 - L2 - L4


def test_sibling_leader_within_two_hops():
    active = []
    for node_id in ("L1", "L2", "L3"):
        active.append(LeaderInfo(node_id, "x:0", parent=assign_tree_parent(active)))
    # L2 and L3 are siblings under L1: distance 2.
    assert "L1" in tree_neighbors(active, "L2")
    assert "L3" in tree_neighbors(active, "L1")
    assert tree_diameter(active) == 2


def test_match_manifest():
    doc = {"devtype": "Thermometer", "attributes": {"location": "room1"}}
    assert match_manifest(doc, "Thermometer")
    assert match_manifest(doc, "Thermometer", [("location", "room1")])
    assert not match_manifest(doc, "Thermometer", [("location", "room2")])
    assert not match_manifest(doc, "Camera")
