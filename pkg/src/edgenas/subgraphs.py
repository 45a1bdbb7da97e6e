"""Enclosing subgraph extraction and distance-based node encodings."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .graphs import Graph


@dataclass
class EnclosingSubgraph:
    """Induced subgraph around a candidate link, in local node ids."""

    nodes: list[int]                      # global ids, sorted ascending
    node_map: dict[int, int]              # global id -> local id
    edges: list[tuple[int, int]]          # local undirected edges, u < v
    target: tuple[int, int]               # local ids of the candidate pair
    features: np.ndarray | None = None    # (len(nodes), feature_dim)
    label: float | None = None

    @property
    def node_count(self) -> int:
        return len(self.nodes)


def _bfs_distances(adj: list[list[int]], source: int, n: int) -> np.ndarray:
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def _bfs_ball(graph: Graph, source: int, hops: int) -> set[int]:
    seen = {source}
    frontier = [source]
    for _ in range(hops):
        nxt = []
        for u in frontier:
            for w in graph.neighbors(u):
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return seen


def extract_enclosing_subgraph(graph: Graph, pair, hops: int = 2) -> EnclosingSubgraph:
    """Union of the h-hop balls around both endpoints, candidate edge removed.

    The pair itself need not be an edge of the graph; if it is, that edge
    is dropped from the subgraph so the encoding cannot leak the label.
    """
    u, v = pair
    if u == v:
        raise ContractError("candidate pair endpoints must differ")
    for x in (u, v):
        if not 0 <= x < graph.node_count:
            raise ContractError(f"node {x} out of range")
    if hops < 1:
        raise ContractError("hops must be at least 1")
    ball = _bfs_ball(graph, u, hops) | _bfs_ball(graph, v, hops)
    nodes = sorted(ball)
    node_map = {g: i for i, g in enumerate(nodes)}
    tgt = (min(u, v), max(u, v))
    edges = []
    for a, b in graph.edges:
        if a in ball and b in ball and (a, b) != tgt:
            edges.append((node_map[a], node_map[b]))
    edges.sort()
    return EnclosingSubgraph(nodes=nodes, node_map=node_map, edges=edges,
                             target=(node_map[u], node_map[v]))


def distance_encode(sub: EnclosingSubgraph, d_max: int = 3) -> np.ndarray:
    """One-hot distances to both target endpoints, concatenated per node.

    Distances are computed inside the subgraph (candidate edge already
    absent), capped at d_max; unreachable nodes also map to d_max.
    """
    if d_max < 1:
        raise ContractError("d_max must be at least 1")
    n = sub.node_count
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in sub.edges:
        adj[a].append(b)
        adj[b].append(a)
    enc = np.zeros((n, 2 * (d_max + 1)), dtype=np.float64)
    for side, src in enumerate(sub.target):
        dist = _bfs_distances(adj, src, n)
        capped = np.where(dist < 0, d_max, np.minimum(dist, d_max))
        enc[np.arange(n), side * (d_max + 1) + capped] = 1.0
    return enc
