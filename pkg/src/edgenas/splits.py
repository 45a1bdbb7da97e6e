"""Link-prediction splits and uniform negative sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, SamplingError, SplitError
from .graphs import Graph

# below this node count negative sampling enumerates all non-edges
# exactly; above it sparse graphs make batched rejection cheap
_ENUMERATE_LIMIT = 1500


@dataclass
class LinkSplit:
    """Positive/negative link partitions for train/valid/test."""

    train_pos: list[tuple[int, int]]
    valid_pos: list[tuple[int, int]]
    test_pos: list[tuple[int, int]]
    train_neg: list[tuple[int, int]]
    valid_neg: list[tuple[int, int]]
    test_neg: list[tuple[int, int]]
    seed: int = 0

    def all_positive(self) -> set[tuple[int, int]]:
        return set(self.train_pos) | set(self.valid_pos) | set(self.test_pos)

    def all_negative(self) -> set[tuple[int, int]]:
        return set(self.train_neg) | set(self.valid_neg) | set(self.test_neg)


def _norm(pair) -> tuple[int, int]:
    u, v = pair
    return (min(u, v), max(u, v))


def sample_negative_links(graph: Graph, count: int, seed: int,
                          exclude=()) -> list[tuple[int, int]]:
    """Draw ``count`` distinct non-edges uniformly without replacement.

    Pairs in ``exclude`` are never returned.  Raises SamplingError when
    fewer eligible non-edges exist than requested.
    """
    if count < 0:
        raise ContractError("count must be non-negative")
    n = graph.node_count
    excluded = {_norm(e) for e in exclude}
    total_pairs = n * (n - 1) // 2
    blocked = len(graph._edge_set | excluded)
    eligible = total_pairs - blocked
    if count > eligible:
        raise SamplingError(
            f"requested {count} negatives but only {eligible} non-edges available")
    rng = np.random.default_rng(seed)
    forbidden = graph._edge_set | excluded
    if n <= _ENUMERATE_LIMIT or eligible < max(1, total_pairs // 10):
        pool = [(u, v) for u in range(n) for v in range(u + 1, n)
                if (u, v) not in forbidden]
        idx = rng.choice(len(pool), size=count, replace=False)
        return [pool[i] for i in idx]
    # sparse case: batched rejection sampling stays uniform because every
    # eligible pair is equally likely in each draw
    out: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    while len(out) < count:
        batch = max(64, 2 * (count - len(out)))
        us = rng.integers(0, n, size=batch)
        vs = rng.integers(0, n, size=batch)
        for u, v in zip(us.tolist(), vs.tolist()):
            if u == v:
                continue
            e = (u, v) if u < v else (v, u)
            if e in forbidden or e in seen:
                continue
            seen.add(e)
            out.append(e)
            if len(out) == count:
                break
    return out


def split_links(graph: Graph, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> LinkSplit:
    """Shuffle edges into train/valid/test and sample matching negatives.

    Negatives are drawn once, without replacement, from the non-edges of
    the full graph, then partitioned so the three negative sets are
    pairwise disjoint and size-matched to their positive counterparts.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ContractError(f"ratios must be three non-negatives summing to 1: {ratios}")
    m = len(graph.edges)
    if m < 10:
        raise SplitError(f"need at least 10 edges to split, got {m}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(m)
    edges = [graph.edges[i] for i in order]
    n_valid = int(np.floor(ratios[1] * m))
    n_test = int(np.floor(ratios[2] * m))
    n_train = m - n_valid - n_test
    train_pos = edges[:n_train]
    valid_pos = edges[n_train:n_train + n_valid]
    test_pos = edges[n_train + n_valid:]
    try:
        negs = sample_negative_links(graph, m, seed=seed + 1)
    except SamplingError as exc:
        raise SplitError(f"cannot sample {m} negatives: {exc}") from exc
    return LinkSplit(
        train_pos=train_pos, valid_pos=valid_pos, test_pos=test_pos,
        train_neg=negs[:n_train],
        valid_neg=negs[n_train:n_train + n_valid],
        test_neg=negs[n_train + n_valid:],
        seed=seed,
    )


def split_indices(count: int, ratios, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffled index partition for node or graph level datasets."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ContractError(f"ratios must be three non-negatives summing to 1: {ratios}")
    if count < 3:
        raise SplitError(f"need at least 3 items to split, got {count}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(count)
    n_valid = int(np.floor(ratios[1] * count))
    n_test = int(np.floor(ratios[2] * count))
    n_train = count - n_valid - n_test
    return (order[:n_train], order[n_train:n_train + n_valid],
            order[n_train + n_valid:])
