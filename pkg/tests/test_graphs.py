import json

import numpy as np
import pytest

from gridrestore.feeder import parse_feeder
from gridrestore.graphs import (
    BusBlock, BusBlockGraph, GraphError, connected_subgraphs, eccentricity,
    reduce_to_bus_blocks, restoration_step_bounds, step_estimates,
)
from conftest import diag3
from oracles import floyd_warshall, union_find_components


def random_feeder_doc(rng, n_nodes, edges, damaged=(), switchable=()):
    damaged = {frozenset(e) for e in damaged}
    switchable = {frozenset(e) for e in switchable}
    return {
        "name": "rand",
        "base_frequency_hz": 60.0, "step_interval_s": 1.0, "base_mva_per_phase": 1.0,
        "nodes": [{"id": f"n{i}", "phases": "abc", "base_kv_ln": 2.4} for i in range(n_nodes)],
        "branches": [
            {"id": f"b{k}", "from": f"n{a}", "to": f"n{b}", "phases": "abc",
             "switchable": frozenset((a, b)) in switchable,
             "damaged": frozenset((a, b)) in damaged,
             "r_ohm": diag3(0.1), "x_ohm": diag3(0.3)}
            for k, (a, b) in enumerate(edges)
        ],
        "ders": [], "loads": [],
    }


def random_tree_edges(rng, n):
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def test_connected_single_subgraph(ieee123_model):
    assert len(connected_subgraphs(ieee123_model)) == 1


def test_damaged_branch_splits():
    doc = random_feeder_doc(None, 2, [(0, 1)], damaged=[(0, 1)])
    model = parse_feeder(json.dumps(doc))
    subs = connected_subgraphs(model)
    assert len(subs) == 2
    assert all(len(s.nodes) == 1 for s in subs)
    assert all(len(s.branches) == 0 for s in subs)


def test_components_match_union_find_oracle():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = int(rng.integers(5, 31))
        edges = random_tree_edges(rng, n)
        n_damage = int(rng.integers(0, 4))
        damage_idx = rng.choice(len(edges), size=min(n_damage, len(edges)), replace=False)
        damaged = [edges[i] for i in damage_idx]
        model = parse_feeder(json.dumps(random_feeder_doc(rng, n, edges, damaged=damaged)))
        subs = connected_subgraphs(model)
        surviving = [e for e in edges if e not in damaged]
        expected = union_find_components(range(n), surviving)
        got = [frozenset(int(x.id[1:]) for x in s.nodes) for s in subs]
        assert sorted(map(sorted, got)) == sorted(map(sorted, (map(sorted, expected))))
        # a tree with k damaged edges falls into k+1 components
        assert len(subs) == len(damaged) + 1


def test_bus_blocks_all_switchable():
    edges = [(0, 1), (1, 2), (2, 3)]
    doc = random_feeder_doc(None, 4, edges, switchable=edges)
    graph = reduce_to_bus_blocks(parse_feeder(json.dumps(doc)))
    assert len(graph.blocks) == 4
    assert len(graph.edges) == 3


def test_bus_blocks_none_switchable():
    edges = [(0, 1), (1, 2), (2, 3)]
    doc = random_feeder_doc(None, 4, edges)
    graph = reduce_to_bus_blocks(parse_feeder(json.dumps(doc)))
    assert len(graph.blocks) == 1
    assert graph.edges == ()


def test_bus_blocks_match_union_find_oracle():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = int(rng.integers(4, 21))
        edges = random_tree_edges(rng, n)
        extra = int(rng.integers(0, 3))
        for _ in range(extra):
            a, b = rng.integers(0, n, size=2)
            if a != b and (min(a, b), max(a, b)) not in edges:
                edges.append((int(min(a, b)), int(max(a, b))))
        sw_idx = rng.choice(len(edges), size=int(rng.integers(0, len(edges) + 1)), replace=False)
        switchable = [edges[i] for i in sw_idx]
        model = parse_feeder(json.dumps(random_feeder_doc(rng, n, edges, switchable=switchable)))
        graph = reduce_to_bus_blocks(model)
        hard = [e for e in edges if e not in switchable]
        expected = union_find_components(range(n), hard)
        assert len(graph.blocks) == len(expected)


def test_blocks_partition_nodes(ieee123_model):
    graph = reduce_to_bus_blocks(ieee123_model)
    seen = [nid for blk in graph.blocks for nid in blk.nodes]
    assert sorted(seen) == sorted(n.id for n in ieee123_model.nodes)


def test_disconnected_bus_blocks_error():
    doc = random_feeder_doc(None, 2, [(0, 1)], damaged=[(0, 1)])
    with pytest.raises(GraphError, match="disconnected"):
        reduce_to_bus_blocks(parse_feeder(json.dumps(doc)))


def path_graph(k):
    blocks = tuple(BusBlock(i, (f"n{i}",), False) for i in range(k))
    edges = tuple((i, i + 1, f"e{i}") for i in range(k - 1))
    return BusBlockGraph(blocks, edges)


def test_eccentricity_trivial():
    g = BusBlockGraph((BusBlock(0, ("n0",), True),), ())
    assert eccentricity(g, 0) == 0


def test_eccentricity_path():
    g = path_graph(3)
    assert eccentricity(g, 0) == 2
    assert eccentricity(g, 1) == 1
    assert eccentricity(g, 2) == 2


def test_eccentricity_missing_vertex():
    with pytest.raises(GraphError):
        eccentricity(path_graph(2), 7)


def test_eccentricity_matches_floyd_warshall():
    rng = np.random.default_rng(3)
    for _ in range(20):
        k = int(rng.integers(2, 16))
        edges = [(int(rng.integers(0, i)), i) for i in range(1, k)]
        for _ in range(int(rng.integers(0, 4))):
            a, b = sorted(rng.integers(0, k, size=2))
            if a != b:
                edges.append((int(a), int(b)))
        edges = sorted(set(edges))
        blocks = tuple(BusBlock(i, (f"n{i}",), False) for i in range(k))
        g = BusBlockGraph(blocks, tuple((a, b, f"e{j}") for j, (a, b) in enumerate(edges)))
        dist = floyd_warshall(k, edges)
        for v in range(k):
            assert eccentricity(g, v) == int(dist[v].max())


def test_radius_diameter_classical_bound():
    rng = np.random.default_rng(5)
    for _ in range(15):
        k = int(rng.integers(2, 14))
        edges = [(int(rng.integers(0, i)), i) for i in range(1, k)]
        blocks = tuple(BusBlock(i, (f"n{i}",), False) for i in range(k))
        g = BusBlockGraph(blocks, tuple((a, b, f"e{j}") for j, (a, b) in enumerate(edges)))
        eccs = [eccentricity(g, v) for v in range(k)]
        assert min(eccs) <= max(eccs) <= 2 * min(eccs)


def test_edge_addition_never_increases_eccentricity():
    rng = np.random.default_rng(9)
    k = 10
    edges = [(int(rng.integers(0, i)), i) for i in range(1, k)]
    blocks = tuple(BusBlock(i, (f"n{i}",), False) for i in range(k))
    g1 = BusBlockGraph(blocks, tuple((a, b, f"e{j}") for j, (a, b) in enumerate(edges)))
    extra = (0, k - 1, "extra")
    g2 = BusBlockGraph(blocks, g1.edges + (extra,))
    for v in range(k):
        assert eccentricity(g2, v) <= eccentricity(g1, v)


def test_restoration_step_bounds_single():
    blocks = (BusBlock(0, ("n0",), True), BusBlock(1, ("n1",), False))
    g = BusBlockGraph(blocks, ((0, 1, "e0"),))
    assert restoration_step_bounds(g) == (1, 1)


def test_restoration_step_bounds_star():
    blocks = tuple(BusBlock(i, (f"n{i}",), i in (0, 1)) for i in range(4))
    edges = tuple((0, i, f"e{i}") for i in range(1, 4))  # 0 is the hub
    g = BusBlockGraph(blocks, edges)
    assert restoration_step_bounds(g) == (1, 2)


def test_restoration_step_bounds_requires_black_start():
    with pytest.raises(GraphError, match="black-start"):
        restoration_step_bounds(path_graph(3))


def test_base_fixture_bounds(ieee123_model):
    graph = reduce_to_bus_blocks(ieee123_model)
    assert restoration_step_bounds(graph) == (4, 5)


def test_step_estimates_paper_case():
    est = step_estimates((4, 5), 2)
    assert est.conservative == 6
    assert est.generous == 7


def test_step_estimates_trivial():
    est = step_estimates((0, 0), 1)
    assert est.conservative == est.generous == 1
    est = step_estimates((2, 6), 3)
    assert (est.conservative, est.generous) == (5, 9)


def test_step_estimates_monotone():
    rng = np.random.default_rng(2)
    for _ in range(50):
        r1, d1 = sorted(rng.integers(0, 10, size=2))
        n1 = int(rng.integers(1, 4))
        e1 = step_estimates((int(r1), int(d1)), n1)
        e2 = step_estimates((int(r1) + 1, int(d1) + 1), n1 + 1)
        assert e2.conservative >= e1.conservative
        assert e2.generous >= e1.generous
