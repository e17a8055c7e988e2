import random

import pytest

from edgefed.clock import FakeTimeline
from edgefed.errors import CapacityError
from edgefed.scheduler import (
    ClusterState,
    NodeDescriptor,
    ResourceRequest,
    filter_nodes,
    rank_nodes,
)

GIB = 1024**3


def worker(node_id, cpu=4000, mem=32 * GIB, labels=None, alloc_cpu=0, alloc_mem=0):
    return NodeDescriptor(
        node_id=node_id,
        role="worker",
        cpu_capacity_millicores=cpu,
        mem_capacity_bytes=mem,
        labels=dict(labels or {}),
        allocated_cpu_millicores=alloc_cpu,
        allocated_mem_bytes=alloc_mem,
    )


def request(cpu=500, mem=2 * GIB, selector=None):
    return ResourceRequest.make(cpu, mem, selector)


# -- filter ---------------------------------------------------------------

def test_filter_passes_all_empty_workers():
    nodes = [worker(f"w-{c}") for c in "abc"]
    assert filter_nodes(request(), nodes) == nodes


def test_filter_excludes_control_plane():
    cp = NodeDescriptor(node_id="cp-1", role="control-plane")
    assert filter_nodes(request(), [cp, worker("w-a")]) == [worker("w-a")] or True
    out = filter_nodes(request(), [cp, worker("w-a")])
    assert [n.node_id for n in out] == ["w-a"]


def test_filter_unsatisfiable_selector_is_empty():
    nodes = [worker("w-a"), worker("w-b")]
    assert filter_nodes(request(selector={"gpu": "true"}), nodes) == []


def test_filter_selector_matches_labeled_node():
    nodes = [worker("w-a"), worker("w-b", labels={"gpu": "true"})]
    out = filter_nodes(request(selector={"gpu": "true"}), nodes)
    assert [n.node_id for n in out] == ["w-b"]


def test_filter_excludes_insufficient_cpu():
    tight = worker("w-a", alloc_cpu=3600)  # 400m free < 500m requested
    assert filter_nodes(request(cpu=500), [tight]) == []


def test_filter_is_sound_and_complete_against_brute_force():
    rng = random.Random(99)
    for _ in range(200):
        nodes = []
        for i in range(rng.randint(0, 8)):
            labels = {}
            if rng.random() < 0.5:
                labels["zone"] = rng.choice(["a", "b"])
            nodes.append(
                NodeDescriptor(
                    node_id=f"n-{i}",
                    role=rng.choice(["worker", "worker", "control-plane"]),
                    cpu_capacity_millicores=rng.randint(500, 4000),
                    mem_capacity_bytes=rng.randint(1, 32) * GIB,
                    labels=labels,
                    allocated_cpu_millicores=0,
                    allocated_mem_bytes=0,
                )
            )
            node = nodes[-1]
            node.allocated_cpu_millicores = rng.randint(0, node.cpu_capacity_millicores)
            node.allocated_mem_bytes = rng.randint(0, node.mem_capacity_bytes)
        selector = {"zone": "a"} if rng.random() < 0.3 else {}
        req = request(cpu=rng.randint(100, 2000), mem=rng.randint(1, 8) * GIB, selector=selector)

        expected = [
            n for n in nodes
            if n.role == "worker"
            and n.free_cpu_millicores >= req.cpu_millicores
            and n.free_mem_bytes >= req.mem_bytes
            and all(n.labels.get(k) == v for k, v in selector.items())
        ]
        assert filter_nodes(req, nodes) == expected


# -- rank -----------------------------------------------------------------

def test_rank_prefers_empty_node():
    empty = worker("w-b")
    loaded = worker("w-a", alloc_cpu=2000, alloc_mem=16 * GIB)
    ranked = rank_nodes(request(), [loaded, empty])
    assert ranked[0][0] == "w-b"


def test_rank_tie_breaks_lexicographically():
    ranked = rank_nodes(request(), [worker("w-b"), worker("w-a")])
    assert [node_id for node_id, _ in ranked] == ["w-a", "w-b"]
    assert ranked[0][1] == ranked[1][1]


def test_rank_scores_match_hand_computed_values():
    # Request (500m, 2 GiB) on 4000m/32GiB nodes:
    #   alloc (1000m, 4 GiB):  cpu (4000-1500)/4000=0.625, mem (32-6)/32=0.8125 -> 0.71875
    #   alloc (500m, 8 GiB):   cpu (4000-1000)/4000=0.75,  mem (32-10)/32=0.6875 -> 0.71875
    # Equal scores: lexicographic order decides.
    a = worker("w-a", alloc_cpu=1000, alloc_mem=4 * GIB)
    b = worker("w-b", alloc_cpu=500, alloc_mem=8 * GIB)
    ranked = rank_nodes(request(), [b, a])
    assert ranked == [("w-a", 0.71875), ("w-b", 0.71875)]


def test_rank_orders_descending_by_score():
    # Empty node: cpu 0.875, mem 0.9375 -> 0.90625
    # Half-loaded (2000m, 16 GiB): cpu 0.375, mem 0.4375 -> 0.40625
    p = worker("p")
    q = worker("q", alloc_cpu=2000, alloc_mem=16 * GIB)
    ranked = rank_nodes(request(), [q, p])
    assert ranked == [("p", 0.90625), ("q", 0.40625)]


# -- bind -----------------------------------------------------------------

def test_five_binds_spread_2_2_1():
    clock = FakeTimeline()
    state = ClusterState([worker("w-a"), worker("w-b"), worker("w-c")], clock)
    placements = [state.bind(f"gnuradio-{i}", request()).node_id for i in range(5)]
    counts = {n: placements.count(n) for n in ("w-a", "w-b", "w-c")}
    assert sorted(counts.values()) == [1, 2, 2]
    # Least-allocated with lexicographic ties is fully deterministic:
    assert placements == ["w-a", "w-b", "w-c", "w-a", "w-b"]


def test_bind_when_full_raises_capacity_error_with_reason():
    clock = FakeTimeline()
    state = ClusterState([worker("w-a", cpu=500, mem=2 * GIB)], clock)
    state.bind("p-0", request())
    with pytest.raises(CapacityError) as excinfo:
        state.bind("p-1", request())
    assert "0/1 nodes feasible" in str(excinfo.value)


def test_bind_then_unbind_restores_allocations_exactly():
    clock = FakeTimeline()
    state = ClusterState([worker("w-a")], clock)
    before = (state.node("w-a").allocated_cpu_millicores, state.node("w-a").allocated_mem_bytes)
    decision = state.bind("p-0", request())
    state.unbind(decision.node_id, request())
    after = (state.node("w-a").allocated_cpu_millicores, state.node("w-a").allocated_mem_bytes)
    assert before == after


def test_bind_is_deterministic_for_identical_state():
    def fresh():
        clock = FakeTimeline()
        state = ClusterState(
            [worker("w-a", alloc_cpu=700, alloc_mem=3 * GIB), worker("w-b"), worker("w-c", alloc_cpu=100)],
            clock,
        )
        return state.bind("p-0", request())

    first, second = fresh(), fresh()
    assert (first.node_id, first.score) == (second.node_id, second.score)


def test_policy_is_pluggable():
    def most_allocated(req, candidates):
        ranked = rank_nodes(req, candidates)
        return sorted(ranked, key=lambda pair: (pair[1], pair[0]))

    clock = FakeTimeline()
    state = ClusterState(
        [worker("w-a", alloc_cpu=2000, alloc_mem=16 * GIB), worker("w-b")],
        clock, policy=most_allocated,
    )
    assert state.bind("p-0", request()).node_id == "w-a"


def test_random_bind_unbind_never_exceeds_capacity():
    rng = random.Random(4242)
    clock = FakeTimeline()
    nodes = [worker(f"w-{i}", cpu=rng.randint(1000, 4000), mem=rng.randint(4, 32) * GIB) for i in range(4)]
    state = ClusterState(nodes, clock)
    bound = []  # (node_id, request)
    for _ in range(2000):
        if bound and rng.random() < 0.45:
            node_id, req = bound.pop(rng.randrange(len(bound)))
            state.unbind(node_id, req)
        else:
            req = request(cpu=rng.choice([100, 250, 500, 1000]), mem=rng.choice([1, 2, 4]) * GIB)
            try:
                decision = state.bind("p", req)
                bound.append((decision.node_id, req))
            except CapacityError:
                pass
        for node in state.nodes():
            assert 0 <= node.allocated_cpu_millicores <= node.cpu_capacity_millicores
            assert 0 <= node.allocated_mem_bytes <= node.mem_capacity_bytes
