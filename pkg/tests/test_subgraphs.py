from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgenas.errors import ContractError
from edgenas.graphs import Graph
from edgenas.subgraphs import distance_encode, extract_enclosing_subgraph


def _oracle_ball(graph, source, hops):
    """Plain queue BFS collecting nodes within the hop budget."""
    dist = {source: 0}
    q = deque([source])
    while q:
        u = q.popleft()
        if dist[u] == hops:
            continue
        for w in graph.neighbors(u):
            if w not in dist:
                dist[w] = dist[u] + 1
                q.append(w)
    return set(dist)


def _oracle_distance(nodes, edges, source, target_node):
    """BFS over an explicit edge list, -1 when unreachable."""
    adj = {v: [] for v in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    dist = {source: 0}
    q = deque([source])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                q.append(w)
    return dist.get(target_node, -1)


def _random_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < p]
    return Graph(n, edges)


def test_path_graph_two_hops():
    g = Graph(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])
    sub = extract_enclosing_subgraph(g, (2, 3), hops=2)
    assert sub.nodes == [0, 1, 2, 3, 4, 5]
    # candidate edge itself removed
    assert (sub.node_map[2], sub.node_map[3]) not in sub.edges


def test_candidate_pair_need_not_be_edge():
    g = Graph(4, [(0, 1), (1, 2), (2, 3)])
    sub = extract_enclosing_subgraph(g, (0, 3), hops=1)
    assert sub.nodes == [0, 1, 2, 3]
    assert len(sub.edges) == 3


def test_bad_pair_rejected():
    g = Graph(3, [(0, 1)])
    with pytest.raises(ContractError):
        extract_enclosing_subgraph(g, (1, 1))
    with pytest.raises(ContractError):
        extract_enclosing_subgraph(g, (0, 7))
    with pytest.raises(ContractError):
        extract_enclosing_subgraph(g, (0, 1), hops=0)


@given(st.integers(min_value=2, max_value=50), st.integers(min_value=0, max_value=40),
       st.integers(min_value=1, max_value=3))
@settings(max_examples=40, deadline=None)
def test_node_set_matches_bfs_oracle(n, seed, hops):
    g = _random_graph(n, 0.15, seed)
    rng = np.random.default_rng(seed + 1000)
    u, v = rng.choice(n, size=2, replace=False)
    sub = extract_enclosing_subgraph(g, (int(u), int(v)), hops=hops)
    expected = _oracle_ball(g, int(u), hops) | _oracle_ball(g, int(v), hops)
    assert set(sub.nodes) == expected
    # induced edges minus the candidate pair
    tgt = (min(u, v), max(u, v))
    want = sorted((sub.node_map[a], sub.node_map[b]) for a, b in g.edges
                  if a in expected and b in expected and (a, b) != tgt)
    assert sub.edges == want


def test_distance_encoding_rows_are_two_hot():
    g = _random_graph(30, 0.1, 3)
    sub = extract_enclosing_subgraph(g, (0, 1), hops=2)
    enc = distance_encode(sub, d_max=3)
    assert enc.shape == (sub.node_count, 8)
    assert np.array_equal(enc.sum(axis=1), np.full(sub.node_count, 2.0))


def test_endpoints_encode_zero_distance():
    g = Graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    sub = extract_enclosing_subgraph(g, (0, 2), hops=2)
    enc = distance_encode(sub, d_max=3)
    lu, lv = sub.target
    assert enc[lu, 0] == 1.0 and enc[lv, 4] == 1.0


@given(st.integers(min_value=2, max_value=50), st.integers(min_value=0, max_value=30))
@settings(max_examples=40, deadline=None)
def test_distance_encoding_matches_bfs_oracle(n, seed):
    g = _random_graph(n, 0.12, seed)
    rng = np.random.default_rng(seed + 77)
    u, v = rng.choice(n, size=2, replace=False)
    d_max = 3
    sub = extract_enclosing_subgraph(g, (int(u), int(v)), hops=2)
    enc = distance_encode(sub, d_max=d_max)
    local_nodes = list(range(sub.node_count))
    for w in local_nodes:
        for side, src in enumerate(sub.target):
            d = _oracle_distance(local_nodes, sub.edges, src, w)
            slot = d_max if d < 0 else min(d, d_max)
            assert enc[w, side * (d_max + 1) + slot] == 1.0


def test_unreachable_nodes_hit_cap_bucket():
    # star around node 0 plus an isolated pair far from the target side
    g = Graph(5, [(0, 1), (0, 2), (3, 4)])
    sub = extract_enclosing_subgraph(g, (3, 4), hops=2)
    enc = distance_encode(sub, d_max=3)
    # the candidate edge is removed, so 4 is unreachable from 3
    lu, lv = sub.target
    assert enc[lv, 3] == 1.0
    assert enc[lu, 4 + 3] == 1.0


def test_extraction_deterministic():
    g = _random_graph(40, 0.1, 9)
    a = extract_enclosing_subgraph(g, (1, 5), hops=2)
    b = extract_enclosing_subgraph(g, (1, 5), hops=2)
    assert a.nodes == b.nodes and a.edges == b.edges and a.target == b.target
