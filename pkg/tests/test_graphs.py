"""Graph store: names, validation, extraction, containment."""

from __future__ import annotations

import json
import random

import pytest

from graphssr.graphs import (
    GraphFormatError,
    Subgraph,
    TaskInstance,
    TextGraph,
    dump_document,
    ego_subgraph,
    is_subgraph_of,
    load_document,
    node_name,
    parse_node_name,
)

from graphgen import random_text_graph


# --- node names -------------------------------------------------------------


def test_node_name_round_trip_is_bijective():
    rng = random.Random(7)
    for _ in range(500):
        nid = rng.randrange(0, 10**9)
        assert parse_node_name(node_name(nid)) == nid
    assert node_name(0) == "node0"
    assert parse_node_name("node0") == 0


@pytest.mark.parametrize(
    "bad", ["node", "node-1", "node01", "Node3", "node 3", "n3", "3", "node3 ", "nodeAB"]
)
def test_parse_node_name_rejects_non_canonical(bad):
    with pytest.raises(GraphFormatError):
        parse_node_name(bad)


@pytest.mark.parametrize("bad", [-1, 1.5, True, None])
def test_node_name_rejects_bad_ids(bad):
    with pytest.raises(GraphFormatError):
        node_name(bad)


# --- TextGraph validation ---------------------------------------------------


def test_from_parts_rejects_self_loop_with_location():
    with pytest.raises(GraphFormatError, match="edge #1.*self-loop"):
        TextGraph.from_parts({0: "a", 1: "b"}, [(0, 1), (1, 1)])


def test_from_parts_rejects_unknown_endpoint():
    with pytest.raises(GraphFormatError, match="edge #0.*unknown node 9"):
        TextGraph.from_parts({0: "a", 1: "b"}, [(0, 9)])


def test_edges_are_unordered_and_deduplicated():
    g = TextGraph.from_parts({0: "a", 1: "b"}, [(0, 1), (1, 0), (0, 1)])
    assert g.edges == frozenset({(0, 1)})
    assert g.has_edge(1, 0)


def test_directed_export_collapses_to_undirected():
    """Oracle: a directed export listing both orientations must load to
    exactly the set of frozenset-deduplicated pairs.
    """
    rng = random.Random(13)
    n = 2708
    undirected = set()
    while len(undirected) < 5278:
        a, b = rng.randrange(n), rng.randrange(n)
        if a != b:
            undirected.add((min(a, b), max(a, b)))
    directed = [[a, b] for a, b in undirected] + [[b, a] for a, b in undirected]
    rng.shuffle(directed)
    assert len(directed) == 10556
    doc = {
        "nodes": [{"id": i, "text": f"paper {i}"} for i in range(n)],
        "edges": directed,
    }
    graph = load_document(json.dumps(doc)).graph
    oracle = {frozenset(e) for e in directed}
    assert {frozenset(e) for e in graph.edges} == oracle
    assert len(graph.edges) == 5278


# --- document loading -------------------------------------------------------


def test_load_document_rejects_duplicate_node_ids():
    doc = {"nodes": [{"id": 1, "text": "a"}, {"id": 1, "text": "b"}], "edges": []}
    with pytest.raises(GraphFormatError, match="duplicate id 1"):
        load_document(json.dumps(doc))


def test_load_document_rejects_bad_json():
    with pytest.raises(GraphFormatError, match="invalid JSON"):
        load_document("{nope")


def test_load_document_rejects_missing_keys():
    with pytest.raises(GraphFormatError, match="missing 'edges'"):
        load_document(json.dumps({"nodes": []}))


def test_document_round_trip_preserves_everything():
    doc = {
        "nodes": [{"id": 0, "text": "alpha"}, {"id": 1, "text": "beta"}],
        "edges": [[1, 0]],
        "tasks": [
            {
                "kind": "node_classification",
                "central": [0],
                "options": ["A", "B"],
                "description": "which is it",
                "gold_label": "A",
            }
        ],
    }
    loaded = load_document(json.dumps(doc))
    again = load_document(dump_document(loaded))
    assert again.graph == loaded.graph
    assert again.tasks == loaded.tasks


def test_load_document_validates_task_central_nodes():
    doc = {
        "nodes": [{"id": 0, "text": "a"}],
        "edges": [],
        "tasks": [{"kind": "node_classification", "central": [5], "options": ["A"]}],
    }
    with pytest.raises(GraphFormatError, match="central node 5"):
        load_document(json.dumps(doc))


# --- TaskInstance -----------------------------------------------------------


def test_task_kind_central_arity():
    TaskInstance(kind="link_classification", central=(1, 2), options=("A",))
    with pytest.raises(GraphFormatError):
        TaskInstance(kind="link_classification", central=(1,), options=("A",))
    with pytest.raises(GraphFormatError):
        TaskInstance(kind="node_classification", central=(1, 2), options=("A",))
    with pytest.raises(GraphFormatError):
        TaskInstance(kind="edge_prediction", central=(1,), options=("A",))


def test_task_options_validation():
    with pytest.raises(GraphFormatError, match="angle brackets"):
        TaskInstance(kind="node_classification", central=(0,), options=("<A>",))
    with pytest.raises(GraphFormatError, match="duplicate option"):
        TaskInstance(kind="node_classification", central=(0,), options=("A", " a "))
    with pytest.raises(GraphFormatError, match="not among the options"):
        TaskInstance(
            kind="node_classification", central=(0,), options=("A",), gold_label="B"
        )
    # gold label matches after normalization
    TaskInstance(
        kind="node_classification",
        central=(0,),
        options=("Neural Networks",),
        gold_label=" neural networks ",
    )


# --- Subgraph ---------------------------------------------------------------


def test_subgraph_equality_is_set_equality():
    a = Subgraph.make([3, 1], [5, 4], [(5, 1), (4, 1)])
    b = Subgraph.make([1, 3], [4, 5], [(1, 4), (1, 5)])
    assert a == b
    assert a.central == (1, 3)
    assert a.edges == frozenset({(1, 4), (1, 5)})


def test_subgraph_well_formed():
    assert Subgraph.make([1], [2], [(1, 2)]).well_formed()
    assert Subgraph.make([1]).well_formed()
    assert not Subgraph.make([], [2]).well_formed()                  # no central
    assert not Subgraph.make([1], [1]).well_formed()                 # overlap
    assert not Subgraph.make([1], [2], [(1, 3)]).well_formed()       # dangling edge
    assert not Subgraph(central=(1,), edges=frozenset({(1, 1)})).well_formed()


def test_is_subgraph_of():
    context = Subgraph.make([1], [2, 3], [(1, 2), (1, 3), (2, 3)])
    assert is_subgraph_of(Subgraph.make([1], [2], [(1, 2)]), context)
    assert is_subgraph_of(Subgraph.make([1]), context)
    assert not is_subgraph_of(Subgraph.make([1], [9]), context)
    assert not is_subgraph_of(Subgraph.make([1], [2, 3], [(1, 9)]), context)


# --- ego extraction ---------------------------------------------------------


def _bfs_oracle(graph: TextGraph, centers: tuple[int, ...], hops: int) -> dict[int, int]:
    """Plain dict-based BFS distances, independent of the implementation."""
    dist = {c: 0 for c in centers}
    frontier = list(centers)
    for level in range(1, hops + 1):
        nxt = []
        for node in frontier:
            for a, b in graph.edges:
                if a == node and b not in dist:
                    dist[b] = level
                    nxt.append(b)
                elif b == node and a not in dist:
                    dist[a] = level
                    nxt.append(a)
        frontier = nxt
    return dist


def test_ego_subgraph_matches_bfs_oracle_on_random_graphs():
    rng = random.Random(31)
    for trial in range(30):
        g = random_text_graph(rng, n_nodes=rng.randint(5, 40), edge_prob=0.15)
        central = rng.choice(sorted(g.nodes))
        hops = rng.randint(0, 3)
        sub = ego_subgraph(g, [central], hops=hops)
        oracle = _bfs_oracle(g, (central,), hops)
        assert sub.nodes == set(oracle), f"trial {trial}"
        assert sub.edges == {
            e for e in g.edges if e[0] in oracle and e[1] in oracle
        }


def test_ego_subgraph_truncates_by_distance_then_id():
    # star: 0 at the center, neighbors 1..6, plus a second-hop node 7 off 1
    g = TextGraph.from_parts(
        {i: str(i) for i in range(8)},
        [(0, i) for i in range(1, 7)] + [(1, 7)],
    )
    sub = ego_subgraph(g, [0], hops=2, max_nodes=4)
    # distance order: 0; then 1..6 by id; 7 last
    assert sub.nodes == {0, 1, 2, 3}
    sub_all = ego_subgraph(g, [0], hops=2, max_nodes=8)
    assert sub_all.nodes == set(range(8))


def test_ego_subgraph_keeps_all_central_nodes():
    g = TextGraph.from_parts({i: str(i) for i in range(5)}, [(0, 1), (1, 2), (2, 3), (3, 4)])
    sub = ego_subgraph(g, [0, 4], hops=1, max_nodes=2)
    assert set(sub.central) == {0, 4}
    assert sub.nodes == {0, 4}
    with pytest.raises(GraphFormatError, match="max_nodes"):
        ego_subgraph(g, [0, 4], hops=1, max_nodes=1)


def test_ego_subgraph_rejects_unknown_central():
    g = random_text_graph(random.Random(1), 5, 0.5)
    with pytest.raises(GraphFormatError, match="central node 99"):
        ego_subgraph(g, [99], hops=1)


def test_ego_subgraph_hop_zero_is_central_only():
    g = random_text_graph(random.Random(2), 6, 0.5)
    sub = ego_subgraph(g, [0], hops=0)
    assert sub.nodes == {0}
    assert sub.edges == frozenset()
