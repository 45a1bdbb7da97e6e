"""End-to-end task pipelines: split, search, derive, retrain, evaluate."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, ContractError, IngestionError
from .graphs import Graph, RelGraph
from .metrics import (accuracy, auc, common_neighbors_baseline, filtered_rank,
                      mrr_hits)
from .search import DerivedArchitecture, SearchLog, retrain, search
from .splits import split_indices, split_links
from .subgraphs import distance_encode, extract_enclosing_subgraph
from .supernet import (batch_full_graph, batch_graph_list, batch_subgraphs,
                       build_kg_arrays, build_supernet)


@dataclass
class TaskRun:
    """Everything one seed's pipeline produced."""

    task: str
    dataset: str
    seed: int
    search_log: SearchLog
    derived: DerivedArchitecture
    metrics: dict[str, float]
    timings: dict[str, float]
    retrain_curve: list[float] = field(default_factory=list)


_EVAL_CHUNK = 256


# ---------------------------------------------------------------------------
# homogeneous link prediction


class _LinkAdapter:
    """Mini-batched enclosing-subgraph training with AUC validation."""

    def __init__(self, train_subs, valid_pos, valid_neg, test_pos, test_neg,
                 batch_size):
        self.train_subs = train_subs
        self.valid = (valid_pos, valid_neg)
        self.test = (test_pos, test_neg)
        self.batch_size = batch_size

    def train_batches(self, rng):
        order = rng.permutation(len(self.train_subs))
        for i in range(0, len(order), self.batch_size):
            chunk = [self.train_subs[j] for j in order[i:i + self.batch_size]]
            yield batch_subgraphs(chunk)

    def loss(self, net, sel, batch, dropout=0.0, dropout_rng=None):
        logits = net.forward(sel, batch, dropout=dropout,
                             dropout_rng=dropout_rng)
        return T.bce_with_logits(logits, batch.labels)

    def _scores(self, net, sel, subs):
        out = []
        for i in range(0, len(subs), _EVAL_CHUNK):
            batch = batch_subgraphs(subs[i:i + _EVAL_CHUNK])
            out.append(net.forward(sel, batch).data)
        return np.concatenate(out)

    def _auc(self, net, sel, pos, neg):
        return auc(self._scores(net, sel, pos), self._scores(net, sel, neg))

    def validate(self, net, sel):
        return self._auc(net, sel, *self.valid)

    def evaluate(self, net, sel):
        return self._auc(net, sel, *self.test)


def _link_subgraph(train_graph, pair, label, hops, d_max, cache):
    key = (min(pair), max(pair))
    sub = cache.get(key)
    if sub is None:
        sub = extract_enclosing_subgraph(train_graph, pair, hops=hops)
        sub.features = distance_encode(sub, d_max=d_max)
        cache[key] = sub
    sub.label = label
    return sub


def prepare_lp_homogeneous(graph: Graph, *, seed: int = 0,
                           batch_size: int = 64, hops: int = 2,
                           d_max: int = 3, ratios=(0.8, 0.1, 0.1)):
    """Split links and build enclosing-subgraph training data.

    The message-passing graph excludes every valid/test positive edge, so
    held-out links are invisible during training.  Returns the adapter,
    the supernet keyword arguments, and the pruned training graph with
    its split for baseline scoring.
    """
    split = split_links(graph, ratios=ratios, seed=seed)
    held_out = split.valid_pos + split.test_pos
    train_graph = graph.without_edges(held_out)
    for u, v in held_out:
        assert not train_graph.has_edge(u, v), "held-out edge leaked"
    cache: dict = {}

    def subs(pairs, label):
        return [_link_subgraph(train_graph, p, label, hops, d_max, cache)
                for p in pairs]

    train_subs = subs(split.train_pos, 1.0) + subs(split.train_neg, 0.0)
    adapter = _LinkAdapter(
        train_subs,
        subs(split.valid_pos, 1.0), subs(split.valid_neg, 0.0),
        subs(split.test_pos, 1.0), subs(split.test_neg, 0.0),
        batch_size)
    return adapter, {"in_dim": 2 * (d_max + 1)}, (train_graph, split)


def run_lp_homogeneous(graph: Graph, *, dataset: str = "", seed: int = 0,
                       dims: int = 32, layer_count: int = 2,
                       search_epochs: int = 10, retrain_epochs: int = 40,
                       lr: float = 1e-3, batch_size: int = 64,
                       dropout: float = 0.0, hops: int = 2, d_max: int = 3,
                       tau0: float = 1.0, tau_final: float = 0.1,
                       patience: int = 20, ablation=(),
                       ratios=(0.8, 0.1, 0.1)) -> TaskRun:
    """Split links, search an architecture, retrain it, report test AUC."""
    t0 = time.perf_counter()
    adapter, net_kw, (train_graph, split) = prepare_lp_homogeneous(
        graph, seed=seed, batch_size=batch_size, hops=hops, d_max=d_max,
        ratios=ratios)
    t_prep = time.perf_counter()

    net = build_supernet("lp_homo", dims, layer_count, ablation,
                         seed=[seed, 7], **net_kw)
    log, derived = search(net, adapter, epochs=search_epochs, lr=lr,
                          tau0=tau0, tau_final=tau_final, seed=seed,
                          dropout=dropout)
    t_search = time.perf_counter()

    child = build_supernet("lp_homo", dims, layer_count, ablation,
                           seed=[seed, 8], **net_kw)
    curve, best_val = retrain(child, derived, adapter, epochs=retrain_epochs,
                              lr=lr, seed=seed, dropout=dropout,
                              patience=patience)
    sel = derived.selection(child.slots)
    test_auc = adapter.evaluate(child, sel)
    t_retrain = time.perf_counter()

    cn_auc = auc(common_neighbors_baseline(train_graph, split.test_pos),
                 common_neighbors_baseline(train_graph, split.test_neg))
    return TaskRun(
        task="lp_homo", dataset=dataset, seed=seed, search_log=log,
        derived=derived,
        metrics={"auc": test_auc, "val_auc": float(best_val),
                 "cn_auc": cn_auc},
        timings={"prepare": t_prep - t0, "search": t_search - t_prep,
                 "retrain": t_retrain - t_search},
        retrain_curve=curve)


# ---------------------------------------------------------------------------
# node classification


class _NodeAdapter:
    """Full-batch training over the labeled node split."""

    def __init__(self, batch, labels, train_idx, valid_idx, test_idx):
        self.batch = batch
        self.labels = labels
        self.train_idx = train_idx
        self.valid_idx = valid_idx
        self.test_idx = test_idx

    def train_batches(self, rng):
        return [self.batch]

    def loss(self, net, sel, batch, dropout=0.0, dropout_rng=None):
        logits = net.forward(sel, batch, dropout=dropout,
                             dropout_rng=dropout_rng)
        picked = T.gather_rows(logits, self.train_idx)
        return T.cross_entropy(picked, self.labels[self.train_idx])

    def _accuracy(self, net, sel, idx):
        logits = net.forward(sel, self.batch)
        pred = np.argmax(logits.data[idx], axis=1)
        return accuracy(pred, self.labels[idx])

    def validate(self, net, sel):
        return self._accuracy(net, sel, self.valid_idx)

    def evaluate(self, net, sel):
        return self._accuracy(net, sel, self.test_idx)


def prepare_node_classification(graph: Graph, *, seed: int = 0,
                                ratios=(0.6, 0.2, 0.2)):
    if graph.features is None:
        raise ConfigurationError("node classification requires node features")
    if graph.labels is None:
        raise ConfigurationError("node classification requires node labels")
    labeled = np.flatnonzero(graph.labels >= 0)
    tr, va, te = split_indices(len(labeled), ratios, seed=seed)
    labels = graph.labels.astype(np.intp)
    adapter = _NodeAdapter(batch_full_graph(graph), labels,
                           labeled[tr], labeled[va], labeled[te])
    num_classes = int(labels[labeled].max()) + 1
    return adapter, {"in_dim": graph.features.shape[1],
                     "num_classes": num_classes}


def run_node_classification(graph: Graph, *, dataset: str = "", seed: int = 0,
                            dims: int = 64, layer_count: int = 2,
                            search_epochs: int = 20, retrain_epochs: int = 100,
                            lr: float = 1e-3, dropout: float = 0.0,
                            tau0: float = 1.0, tau_final: float = 0.1,
                            patience: int = 20, ablation=(),
                            ratios=(0.6, 0.2, 0.2)) -> TaskRun:
    t0 = time.perf_counter()
    adapter, net_kw = prepare_node_classification(graph, seed=seed,
                                                  ratios=ratios)
    net = build_supernet("nc", dims, layer_count, ablation, seed=[seed, 7],
                         **net_kw)
    log, derived = search(net, adapter, epochs=search_epochs, lr=lr,
                          tau0=tau0, tau_final=tau_final, seed=seed,
                          dropout=dropout)
    t_search = time.perf_counter()
    child = build_supernet("nc", dims, layer_count, ablation, seed=[seed, 8],
                           **net_kw)
    curve, best_val = retrain(child, derived, adapter, epochs=retrain_epochs,
                              lr=lr, seed=seed, dropout=dropout,
                              patience=patience)
    test_acc = adapter.evaluate(child, derived.selection(child.slots))
    t_end = time.perf_counter()
    return TaskRun(
        task="nc", dataset=dataset, seed=seed, search_log=log, derived=derived,
        metrics={"accuracy": test_acc, "val_accuracy": float(best_val)},
        timings={"search": t_search - t0, "retrain": t_end - t_search},
        retrain_curve=curve)


# ---------------------------------------------------------------------------
# graph classification


class _GraphAdapter:
    def __init__(self, graphs, labels, train_idx, valid_idx, test_idx,
                 batch_size):
        self.graphs = graphs
        self.labels = labels
        self.train_idx = train_idx
        self.valid_idx = valid_idx
        self.test_idx = test_idx
        self.batch_size = batch_size

    def train_batches(self, rng):
        order = self.train_idx[rng.permutation(len(self.train_idx))]
        for i in range(0, len(order), self.batch_size):
            idx = order[i:i + self.batch_size]
            yield batch_graph_list([self.graphs[j] for j in idx],
                                   labels=self.labels[idx])

    def loss(self, net, sel, batch, dropout=0.0, dropout_rng=None):
        logits = net.forward(sel, batch, dropout=dropout,
                             dropout_rng=dropout_rng)
        return T.cross_entropy(logits, batch.labels.astype(np.intp))

    def _accuracy(self, net, sel, idx):
        preds = []
        for i in range(0, len(idx), _EVAL_CHUNK):
            chunk = idx[i:i + _EVAL_CHUNK]
            batch = batch_graph_list([self.graphs[j] for j in chunk])
            preds.append(np.argmax(net.forward(sel, batch).data, axis=1))
        return accuracy(np.concatenate(preds), self.labels[idx])

    def validate(self, net, sel):
        return self._accuracy(net, sel, self.valid_idx)

    def evaluate(self, net, sel):
        return self._accuracy(net, sel, self.test_idx)


def degree_onehot_features(graph: Graph, cap: int = 64) -> np.ndarray:
    """One-hot node degree capped at ``cap`` (width cap + 1)."""
    feats = np.zeros((graph.node_count, cap + 1))
    for v in range(graph.node_count):
        feats[v, min(graph.degree(v), cap)] = 1.0
    return feats


def prepare_graph_classification(graphs: list[Graph], labels, *,
                                 seed: int = 0, batch_size: int = 32,
                                 ratios=(0.8, 0.1, 0.1),
                                 degree_cap: int = 64):
    labels = np.asarray(labels, dtype=np.intp)
    if len(graphs) != len(labels):
        raise ContractError("graph and label counts differ")
    if any(g.features is None for g in graphs):
        # featureless collections fall back to capped degree one-hots
        for g in graphs:
            g.features = degree_onehot_features(g, cap=degree_cap)
    widths = {g.features.shape[1] for g in graphs}
    if len(widths) != 1:
        raise ContractError("graphs carry inconsistent feature widths")
    tr, va, te = split_indices(len(graphs), ratios, seed=seed)
    adapter = _GraphAdapter(graphs, labels, tr, va, te, batch_size)
    return adapter, {"in_dim": widths.pop(),
                     "num_classes": int(labels.max()) + 1}


def run_graph_classification(graphs: list[Graph], labels, *,
                             dataset: str = "", seed: int = 0,
                             dims: int = 32, layer_count: int = 4,
                             search_epochs: int = 20,
                             retrain_epochs: int = 100, lr: float = 1e-2,
                             batch_size: int = 32, dropout: float = 0.0,
                             tau0: float = 1.0, tau_final: float = 0.1,
                             patience: int = 20, ablation=(),
                             ratios=(0.8, 0.1, 0.1),
                             degree_cap: int = 64) -> TaskRun:
    t0 = time.perf_counter()
    adapter, net_kw = prepare_graph_classification(
        graphs, labels, seed=seed, batch_size=batch_size, ratios=ratios,
        degree_cap=degree_cap)
    net = build_supernet("gc", dims, layer_count, ablation, seed=[seed, 7],
                         **net_kw)
    log, derived = search(net, adapter, epochs=search_epochs, lr=lr,
                          tau0=tau0, tau_final=tau_final, seed=seed,
                          dropout=dropout)
    t_search = time.perf_counter()
    child = build_supernet("gc", dims, layer_count, ablation, seed=[seed, 8],
                           **net_kw)
    curve, best_val = retrain(child, derived, adapter, epochs=retrain_epochs,
                              lr=lr, seed=seed, dropout=dropout,
                              patience=patience)
    test_acc = adapter.evaluate(child, derived.selection(child.slots))
    t_end = time.perf_counter()
    return TaskRun(
        task="gc", dataset=dataset, seed=seed, search_log=log, derived=derived,
        metrics={"accuracy": test_acc, "val_accuracy": float(best_val)},
        timings={"search": t_search - t0, "retrain": t_end - t_search},
        retrain_curve=curve)


# ---------------------------------------------------------------------------
# knowledge-graph link prediction


class _KGAdapter:
    """1-N scoring over all entities with filtered rank evaluation.

    Every triple spawns a forward query (h, r, ?) and an inverse query
    (t, r + R, ?), so both directions train and evaluate.
    """

    def __init__(self, rg: RelGraph, valid_triples, test_triples,
                 batch_size, smoothing=0.1):
        self.kg = build_kg_arrays(rg)
        self.n_ent = rg.entity_count
        self.batch_size = batch_size
        self.smoothing = smoothing
        r_count = rg.relation_count

        def queries(triples):
            out = []
            for h, r, t in triples:
                out.append((h, r, t))
                out.append((t, r + r_count, h))
            return out

        self.train_queries = queries(rg.triples)
        self.valid_queries = queries(valid_triples)
        self.test_queries = queries(test_triples)
        self.known: dict[tuple[int, int], set[int]] = {}
        for pool in (self.train_queries, self.valid_queries, self.test_queries):
            for h, r, t in pool:
                self.known.setdefault((h, r), set()).add(t)
        self.train_targets: dict[tuple[int, int], set[int]] = {}
        for h, r, t in self.train_queries:
            self.train_targets.setdefault((h, r), set()).add(t)
        self.train_keys = sorted(self.train_targets)

    def train_batches(self, rng):
        order = rng.permutation(len(self.train_keys))
        for i in range(0, len(order), self.batch_size):
            keys = [self.train_keys[j] for j in order[i:i + self.batch_size]]
            heads = np.array([k[0] for k in keys], dtype=np.intp)
            rels = np.array([k[1] for k in keys], dtype=np.intp)
            y = np.zeros((len(keys), self.n_ent))
            for row, k in enumerate(keys):
                y[row, sorted(self.train_targets[k])] = 1.0
            yield heads, rels, y

    def loss(self, net, sel, batch, dropout=0.0, dropout_rng=None):
        heads, rels, y = batch
        logits = net.forward_kg(sel, self.kg, heads, rels, dropout=dropout,
                                dropout_rng=dropout_rng)
        smoothed = y * (1.0 - self.smoothing) + self.smoothing / self.n_ent
        return T.bce_with_logits(logits, smoothed)

    def _ranks(self, net, sel, queries):
        ranks = []
        for i in range(0, len(queries), self.batch_size):
            chunk = queries[i:i + self.batch_size]
            heads = np.array([q[0] for q in chunk], dtype=np.intp)
            rels = np.array([q[1] for q in chunk], dtype=np.intp)
            scores = net.forward_kg(sel, self.kg, heads, rels).data
            for row, (h, r, t) in enumerate(chunk):
                ranks.append(filtered_rank(scores[row], t,
                                           self.known.get((h, r), ())))
        return np.asarray(ranks)

    def validate(self, net, sel):
        # with no held-out triples fall back to the training queries
        queries = self.valid_queries or self.train_queries
        return mrr_hits(self._ranks(net, sel, queries))["mrr"]

    def evaluate(self, net, sel):
        return mrr_hits(self._ranks(net, sel, self.test_queries))


def prepare_lp_kg(train: RelGraph, valid_triples, test_triples, *,
                  batch_size: int = 128):
    adapter = _KGAdapter(train, valid_triples, test_triples, batch_size)
    net_kw = {"entity_count": train.entity_count,
              "num_augmented_relations": train.num_augmented_relations}
    return adapter, net_kw


def run_lp_kg(train: RelGraph, valid_triples, test_triples, *,
              dataset: str = "", seed: int = 0, dims: int = 32,
              layer_count: int = 1, search_epochs: int = 20,
              retrain_epochs: int = 200, lr: float = 1e-3,
              batch_size: int = 128, dropout: float = 0.0,
              tau0: float = 1.0, tau_final: float = 0.1,
              patience: int = 20, ablation=()) -> TaskRun:
    t0 = time.perf_counter()
    adapter, kw = prepare_lp_kg(train, valid_triples, test_triples,
                                batch_size=batch_size)
    net = build_supernet("kg", dims, layer_count, ablation, seed=[seed, 7], **kw)
    log, derived = search(net, adapter, epochs=search_epochs, lr=lr,
                          tau0=tau0, tau_final=tau_final, seed=seed,
                          dropout=dropout)
    t_search = time.perf_counter()
    child = build_supernet("kg", dims, layer_count, ablation, seed=[seed, 8], **kw)
    curve, best_val = retrain(child, derived, adapter, epochs=retrain_epochs,
                              lr=lr, seed=seed, dropout=dropout,
                              patience=patience)
    final = adapter.evaluate(child, derived.selection(child.slots))
    t_end = time.perf_counter()
    metrics = {k: float(v) for k, v in final.items()}
    metrics["val_mrr"] = float(best_val)
    return TaskRun(
        task="kg", dataset=dataset, seed=seed, search_log=log, derived=derived,
        metrics=metrics,
        timings={"search": t_search - t0, "retrain": t_end - t_search},
        retrain_curve=curve)


# ---------------------------------------------------------------------------
# graph-collection ingestion (text format: header count, then per graph a
# "node_count label" line followed by one "tag degree neighbors..." line
# per node)


def load_graph_collection(path) -> tuple[list[Graph], np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"graph collection not found: {path}")
    tokens = path.read_text().split("\n")
    lines = [ln.strip() for ln in tokens if ln.strip()]
    try:
        count = int(lines[0])
    except (IndexError, ValueError):
        raise IngestionError(f"{path}: missing graph count header") from None
    pos = 1
    raw: list[tuple[int, list[int], list[tuple[int, int]]]] = []
    labels: list[int] = []
    tag_values: set[int] = set()
    for gi in range(count):
        try:
            n, label = (int(x) for x in lines[pos].split())
        except (IndexError, ValueError):
            raise IngestionError(
                f"{path}: bad graph header for graph {gi}") from None
        pos += 1
        tags: list[int] = []
        edges: set[tuple[int, int]] = set()
        for v in range(n):
            try:
                parts = [int(x) for x in lines[pos].split()]
                tag, deg, nbrs = parts[0], parts[1], parts[2:]
            except (IndexError, ValueError):
                raise IngestionError(
                    f"{path}: bad node line in graph {gi}") from None
            if len(nbrs) != deg:
                raise IngestionError(
                    f"{path}: graph {gi} node {v} lists {len(nbrs)} "
                    f"neighbors, declared {deg}")
            pos += 1
            tags.append(tag)
            tag_values.add(tag)
            for w in nbrs:
                if w != v:
                    edges.add((min(v, w), max(v, w)))
        raw.append((n, tags, sorted(edges)))
        labels.append(label)
    tag_index = {t: i for i, t in enumerate(sorted(tag_values))}
    label_index: dict[int, int] = {}
    graphs = []
    dense_labels = []
    for (n, tags, edges), label in zip(raw, labels):
        feats = np.zeros((n, len(tag_index)))
        for v, t in enumerate(tags):
            feats[v, tag_index[t]] = 1.0
        graphs.append(Graph(n, edges, features=feats))
        dense_labels.append(label_index.setdefault(label, len(label_index)))
    return graphs, np.asarray(dense_labels, dtype=np.intp)
