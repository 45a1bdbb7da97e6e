"""Graph ingestion: homogeneous edge lists and multi-relational triple files."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, IngestionError

log = logging.getLogger(__name__)

SELF_LOOP = "self_loop"
ORIGINAL = "original"
INVERSE = "inverse"


@dataclass
class Graph:
    """Undirected homogeneous graph with dense node ids in [0, node_count)."""

    node_count: int
    edges: list[tuple[int, int]]                 # (u, v) with u < v
    features: np.ndarray | None = None           # (node_count, feature_dim)
    labels: np.ndarray | None = None             # (node_count,)
    _adj: list[list[int]] = field(default=None, repr=False)
    _edge_set: set[tuple[int, int]] = field(default=None, repr=False)

    def __post_init__(self):
        for u, v in self.edges:
            if u == v:
                raise ContractError("self-loops are not allowed")
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ContractError("edge endpoint out of range")
        if self._adj is None:
            adj: list[list[int]] = [[] for _ in range(self.node_count)]
            for u, v in self.edges:
                adj[u].append(v)
                adj[v].append(u)
            for nbrs in adj:
                nbrs.sort()
            self._adj = adj
        if self._edge_set is None:
            self._edge_set = {(min(u, v), max(u, v)) for u, v in self.edges}

    def neighbors(self, u: int) -> list[int]:
        return self._adj[u]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._edge_set

    def degree(self, u: int) -> int:
        return len(self._adj[u])

    def without_edges(self, removed) -> "Graph":
        """A copy with the given undirected edges dropped (features shared)."""
        drop = {(min(u, v), max(u, v)) for u, v in removed}
        kept = sorted(e for e in self.edges if e not in drop)
        return Graph(self.node_count, kept, features=self.features,
                     labels=self.labels)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        same_feat = (
            (self.features is None and other.features is None)
            or (self.features is not None and other.features is not None
                and np.array_equal(self.features, other.features)))
        return (self.node_count == other.node_count
                and sorted(self.edges) == sorted(other.edges)
                and same_feat)


def load_edge_list(path) -> Graph:
    """Parse a whitespace-separated "u v" edge list into an undirected graph.

    Lines beginning with '#' are skipped; a trailing numeric column (edge
    weight) is tolerated and ignored.  Node ids are compacted to a dense
    range preserving numeric order, so 1-based files load cleanly.
    Duplicate and self-loop lines are skipped with a warning.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"edge list not found: {path}")
    raw_edges: set[tuple[int, int]] = set()
    ids: set[int] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise IngestionError(f"{path}:{lineno}: expected 'u v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise IngestionError(
                f"{path}:{lineno}: non-integer node id in {line!r}") from None
        if u == v:
            log.warning("%s:%d: skipping self-loop %d", path, lineno, u)
            continue
        e = (min(u, v), max(u, v))
        if e in raw_edges:
            continue
        raw_edges.add(e)
        ids.update(e)
    remap = {g: i for i, g in enumerate(sorted(ids))}
    edges = sorted((remap[u], remap[v]) for u, v in raw_edges)
    return Graph(node_count=len(remap), edges=edges)


def load_node_features(path, node_count: int) -> np.ndarray:
    """CSV node features, row i = features of node i."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"feature file not found: {path}")
    feats = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if feats.shape[0] != node_count:
        raise IngestionError(
            f"{path}: {feats.shape[0]} feature rows for {node_count} nodes")
    return feats


def load_node_labels(path, node_count: int) -> np.ndarray:
    """CSV "node_id,label" pairs into a dense label vector."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"label file not found: {path}")
    labels = np.full(node_count, -1, dtype=np.int64)
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            nid_s, lab_s = line.split(",")
            labels[int(nid_s)] = int(lab_s)
        except (ValueError, IndexError):
            raise IngestionError(f"{path}:{lineno}: bad label line {line!r}") from None
    return labels


@dataclass
class RelGraph:
    """Directed multi-relational graph with inverse/self-loop augmentation.

    Augmented relation ids: original r in [0, R), inverse r+R in [R, 2R),
    and a single shared self-loop id 2R.  The augmented triple list holds
    one inverse per original triple plus one self-loop per entity, so
    ``len(augmented) == 2 * len(triples) + entity_count``.
    """

    entity_count: int
    relation_count: int
    triples: list[tuple[int, int, int]]
    entity_vocab: dict[str, int]
    relation_vocab: dict[str, int]
    augmented: list[tuple[int, int, int, str]] = field(default=None)

    def __post_init__(self):
        for h, r, t in self.triples:
            if not 0 <= r < self.relation_count:
                raise ContractError(f"relation id {r} out of range")
            if not (0 <= h < self.entity_count and 0 <= t < self.entity_count):
                raise ContractError("entity id out of range")
        if self.augmented is None:
            aug = []
            for h, r, t in self.triples:
                aug.append((h, r, t, ORIGINAL))
            for h, r, t in self.triples:
                aug.append((t, r + self.relation_count, h, INVERSE))
            sl = self.self_loop_id
            for e in range(self.entity_count):
                aug.append((e, sl, e, SELF_LOOP))
            self.augmented = aug

    @property
    def self_loop_id(self) -> int:
        return 2 * self.relation_count

    @property
    def num_augmented_relations(self) -> int:
        return 2 * self.relation_count + 1


def load_triples(path, entity_vocab: dict[str, int] | None = None,
                 relation_vocab: dict[str, int] | None = None) -> RelGraph:
    """Parse a tab-separated "head relation tail" file.

    String tokens are mapped to dense integer ids in first-seen order;
    pass existing vocabularies to share ids across split files.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"triple file not found: {path}")
    ent = dict(entity_vocab) if entity_vocab else {}
    rel = dict(relation_vocab) if relation_vocab else {}
    triples = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise IngestionError(
                f"{path}:{lineno}: expected 'head\\trelation\\ttail'")
        h_s, r_s, t_s = parts
        h = ent.setdefault(h_s, len(ent))
        r = rel.setdefault(r_s, len(rel))
        t = ent.setdefault(t_s, len(ent))
        triples.append((h, r, t))
    return RelGraph(entity_count=len(ent), relation_count=len(rel),
                    triples=triples, entity_vocab=ent, relation_vocab=rel)


def save_vocab(vocab: dict[str, int], path) -> None:
    """Persist a token-to-id vocabulary as "token\\tid" TSV."""
    lines = [f"{tok}\t{idx}" for tok, idx in sorted(vocab.items(), key=lambda kv: kv[1])]
    Path(path).write_text("\n".join(lines) + "\n")


def load_vocab(path) -> dict[str, int]:
    vocab = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            tok, idx = line.split("\t")
            vocab[tok] = int(idx)
        except ValueError:
            raise IngestionError(f"{path}:{lineno}: bad vocab line") from None
    return vocab
