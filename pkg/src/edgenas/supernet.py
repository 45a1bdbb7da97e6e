"""Over-parameterized message-passing network evaluated under slot mixtures.

One Supernet owns every candidate operator's parameters.  A Selection
supplies per-slot mixing vectors theta; each slot computes the convex
combination of its candidates (collapsing to the single chosen candidate
when theta is a frozen one-hot).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import space
from . import tensor as T
from .errors import ConfigurationError, ContractError, DimensionError
from .graphs import INVERSE, ORIGINAL, Graph, RelGraph
from .space import Selection, SlotCatalog
from .subgraphs import EnclosingSubgraph
from .tensor import Tensor


@dataclass
class BatchedGraphs:
    """Block-diagonal batch of graphs with directed edge arrays sorted by dst."""

    x: np.ndarray                 # (total_nodes, feature_dim)
    src: np.ndarray               # (total_directed_edges,)
    dst: np.ndarray               # sorted non-decreasing
    node_count: int
    graph_ids: np.ndarray         # (total_nodes,), sorted
    graph_count: int
    targets: np.ndarray | None = None   # (graph_count, 2) pair readout indices
    labels: np.ndarray | None = None


def _directed_sorted(edges, node_count):
    if not edges:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    e = np.asarray(edges, dtype=np.intp)
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    order = np.lexsort((src, dst))
    return src[order], dst[order]


def batch_subgraphs(subs: list[EnclosingSubgraph]) -> BatchedGraphs:
    """Stack enclosing subgraphs block-diagonally for one forward pass."""
    if not subs:
        raise ContractError("cannot batch an empty subgraph list")
    xs, srcs, dsts, gids, targets, labels = [], [], [], [], [], []
    offset = 0
    for gi, sub in enumerate(subs):
        if sub.features is None:
            raise ContractError("subgraph lacks node features")
        xs.append(sub.features)
        if sub.edges:
            e = np.asarray(sub.edges, dtype=np.intp) + offset
            srcs.append(np.concatenate([e[:, 0], e[:, 1]]))
            dsts.append(np.concatenate([e[:, 1], e[:, 0]]))
        gids.append(np.full(sub.node_count, gi, dtype=np.intp))
        targets.append((sub.target[0] + offset, sub.target[1] + offset))
        labels.append(0.0 if sub.label is None else float(sub.label))
        offset += sub.node_count
    src = (np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.intp))
    dst = (np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.intp))
    order = np.lexsort((src, dst))
    return BatchedGraphs(
        x=np.vstack(xs), src=src[order], dst=dst[order], node_count=offset,
        graph_ids=np.concatenate(gids), graph_count=len(subs),
        targets=np.asarray(targets, dtype=np.intp),
        labels=np.asarray(labels, dtype=np.float64))


def batch_full_graph(graph: Graph) -> BatchedGraphs:
    """Whole-graph batch for node-level tasks."""
    if graph.features is None:
        raise ContractError("graph lacks node features")
    src, dst = _directed_sorted(graph.edges, graph.node_count)
    return BatchedGraphs(
        x=graph.features, src=src, dst=dst, node_count=graph.node_count,
        graph_ids=np.zeros(graph.node_count, dtype=np.intp), graph_count=1,
        labels=None if graph.labels is None else graph.labels.astype(np.float64))


def batch_graph_list(graphs: list[Graph], labels=None) -> BatchedGraphs:
    """Block-diagonal batch of whole graphs for graph-level tasks."""
    if not graphs:
        raise ContractError("cannot batch an empty graph list")
    xs, srcs, dsts, gids = [], [], [], []
    offset = 0
    for gi, g in enumerate(graphs):
        if g.features is None:
            raise ContractError("graph lacks node features")
        xs.append(g.features)
        if g.edges:
            e = np.asarray(g.edges, dtype=np.intp) + offset
            srcs.append(np.concatenate([e[:, 0], e[:, 1]]))
            dsts.append(np.concatenate([e[:, 1], e[:, 0]]))
        gids.append(np.full(g.node_count, gi, dtype=np.intp))
        offset += g.node_count
    src = (np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.intp))
    dst = (np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.intp))
    order = np.lexsort((src, dst))
    return BatchedGraphs(
        x=np.vstack(xs), src=src[order], dst=dst[order], node_count=offset,
        graph_ids=np.concatenate(gids), graph_count=len(graphs),
        labels=None if labels is None else np.asarray(labels, dtype=np.float64))


@dataclass
class KGArrays:
    """Directed message edges of an augmented relational graph, sorted by dst.

    Self-loop triples are excluded: the self term enters the combination
    step directly rather than the aggregation.
    """

    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray               # augmented relation id per edge
    original_mask: np.ndarray     # (edges, 1) float, 1 where tag == original
    inverse_mask: np.ndarray
    entity_count: int
    self_loop_id: int


def build_kg_arrays(rg: RelGraph) -> KGArrays:
    rows = [(h, r, t, tag) for h, r, t, tag in rg.augmented
            if tag in (ORIGINAL, INVERSE)]
    src = np.asarray([h for h, _, _, _ in rows], dtype=np.intp)
    rel = np.asarray([r for _, r, _, _ in rows], dtype=np.intp)
    dst = np.asarray([t for _, _, t, _ in rows], dtype=np.intp)
    tags = np.asarray([tag == ORIGINAL for _, _, _, tag in rows])
    order = np.lexsort((rel, src, dst))
    src, rel, dst, tags = src[order], rel[order], dst[order], tags[order]
    return KGArrays(
        src=src, dst=dst, rel=rel,
        original_mask=tags.astype(np.float64)[:, None],
        inverse_mask=(~tags).astype(np.float64)[:, None],
        entity_count=rg.entity_count, self_loop_id=rg.self_loop_id)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return rng.uniform(-bound, bound, size=shape)


class Supernet:
    """Parameters and forward passes for one task's searchable network."""

    def __init__(self, task: str, dims: int, layer_count: int, ablation=(), *,
                 in_dim: int | None = None, num_classes: int | None = None,
                 entity_count: int | None = None,
                 num_augmented_relations: int | None = None,
                 seed: int = 0):
        if dims <= 0:
            raise ConfigurationError("dims must be positive")
        if layer_count < 1:
            raise ConfigurationError("layer_count must be at least 1")
        self.task = task
        self.dims = dims
        self.layer_count = layer_count
        self.flags = space.validate_ablation(ablation)
        self.slots = space.build_slots(task, layer_count, self.flags)
        self._slot_by_id = {s.slot_id: s for s in self.slots}
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        d = dims
        if task == "kg":
            if entity_count is None or num_augmented_relations is None:
                raise ConfigurationError(
                    "kg task requires entity_count and num_augmented_relations")
            self.entity_count = entity_count
            self._add("ent_emb", glorot(rng, d, d, (entity_count, d)))
            self._add("rel_emb", glorot(rng, d, d, (num_augmented_relations, d)))
            # asymmetric query head: a plain bilinear head-relation product
            # scores (h, r, t) and (t, r, h) identically and cannot rank
            # one-directional triples
            q_in = d if "no_edge_embedding" in self.flags else 3 * d
            self._add("w_q", glorot(rng, q_in, d))
        else:
            if in_dim is None:
                raise ConfigurationError("in_dim required for non-kg tasks")
            self._add("w_in", glorot(rng, in_dim, d))
        for k in range(layer_count):
            if task == "kg":
                if "shared_lambda" in self.flags:
                    self._add(f"w_lam_{k}", glorot(rng, d, d))
                else:
                    self._add(f"w_o_{k}", glorot(rng, d, d))
                    self._add(f"w_i_{k}", glorot(rng, d, d))
                    self._add(f"w_sl_{k}", glorot(rng, d, d))
                self._add(f"w_rel_{k}", glorot(rng, d, d))
            else:
                if "shared_delta" in self.flags:
                    self._add(f"w_shared_{k}", glorot(rng, d, d))
                else:
                    self._add(f"w_self_{k}", glorot(rng, d, d))
                    self._add(f"w_neigh_{k}", glorot(rng, d, d))
                self._add(f"prelu_{k}", np.asarray(0.25))
            self._add(f"p_com_{k}", glorot(rng, 2 * d, d))
            if "intra_only" not in self.flags:
                self._add(f"p_lc_{k}", glorot(rng, 2 * d, d))
        if "intra_only" not in self.flags:
            self._add("p_la", glorot(rng, layer_count * d, d))
        if task == "lp_homo":
            if "diff_pool" not in self.flags:
                self._add("p_pool", glorot(rng, 2 * d, d))
            self._add("w_head", glorot(rng, d, 1))
            self._add("b_head", np.zeros(1))
        elif task in ("nc", "gc"):
            if num_classes is None or num_classes < 2:
                raise ConfigurationError("classification needs num_classes >= 2")
            self._add("w_head", glorot(rng, d, num_classes))
            self._add("b_head", np.zeros(num_classes))

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def param_names(self) -> list[str]:
        return list(self.params.keys())

    def slot(self, slot_id: str) -> SlotCatalog:
        return self._slot_by_id[slot_id]

    # -- persistence --------------------------------------------------------

    def save_weights(self, path) -> None:
        np.savez(path, **{k: v.data for k, v in self.params.items()})

    def load_weights(self, path) -> None:
        with np.load(path) as blob:
            if set(blob.files) != set(self.params):
                raise ContractError("weight file does not match this network")
            for name, tensor in self.params.items():
                arr = blob[name]
                if arr.shape != tensor.data.shape:
                    raise DimensionError(
                        f"weight '{name}' has shape {arr.shape}, "
                        f"expected {tensor.data.shape}")
                tensor.data = arr.astype(np.float64)

    # -- slot mixture --------------------------------------------------------

    def _mix(self, sel: Selection, slot_id: str, thunks: dict) -> Tensor:
        """Sum theta_o * candidate_o(x); frozen one-hot runs only the winner."""
        slot = self._slot_by_id[slot_id]
        theta = sel.thetas[slot_id]
        if sel.is_one_hot(slot_id):
            return thunks[slot.candidates[int(np.argmax(theta.data))]]()
        out = None
        for i, name in enumerate(slot.candidates):
            term = T.multiply(T.take(theta, i), thunks[name]())
            out = term if out is None else T.add(out, term)
        return out

    # -- homogeneous forward -------------------------------------------------

    def _delta_weights(self, k: int) -> tuple[Tensor, Tensor]:
        if "shared_delta" in self.flags:
            w = self.params[f"w_shared_{k}"]
            return w, w
        return self.params[f"w_self_{k}"], self.params[f"w_neigh_{k}"]

    def _activate(self, sel: Selection, k: int, c: Tensor) -> Tensor:
        return self._mix(sel, f"act_l{k}", {
            "relu": lambda: T.relu(c),
            "prelu": lambda: T.prelu(c, self.params[f"prelu_{k}"]),
            "tanh": lambda: T.tanh(c),
        })

    def _combine(self, sel: Selection, k: int, self_part: Tensor,
                 m: Tensor) -> Tensor:
        return self._mix(sel, f"com_l{k}", {
            "sum": lambda: T.add(self_part, m),
            "concat": lambda: T.matmul(T.concat([self_part, m], axis=1),
                                       self.params[f"p_com_{k}"]),
        })

    def _aggregate(self, sel: Selection, k: int, msg: Tensor,
                   seg: np.ndarray, n: int) -> Tensor:
        return self._mix(sel, f"agg_l{k}", {
            "sum": lambda: T.segment_sum(msg, seg, n),
            "mean": lambda: T.segment_mean(msg, seg, n),
            "max": lambda: T.segment_max(msg, seg, n),
        })

    def homo_layer_forward(self, sel: Selection, k: int, h: Tensor,
                           batch: BatchedGraphs, dropout: float = 0.0,
                           dropout_rng=None) -> Tensor:
        w_self, w_neigh = self._delta_weights(k)
        msg = T.matmul(T.gather_rows(h, batch.src), w_neigh)
        m = self._aggregate(sel, k, msg, batch.dst, batch.node_count)
        c = self._combine(sel, k, T.matmul(h, w_self), m)
        out = self._activate(sel, k, c)
        if dropout > 0.0 and dropout_rng is not None:
            out = T.dropout_apply(
                out, T.make_dropout_mask(out.data.shape, dropout, dropout_rng))
        return out

    def _inter_layer(self, sel: Selection, raw: list[Tensor],
                     connected: list[Tensor]) -> Tensor:
        """Apply layer_agg over raw outputs; intra_only keeps the last state."""
        if "intra_only" in self.flags:
            return connected[-1]
        return self._mix(sel, "la", {
            "skip": lambda: space.layer_aggregate("skip", raw),
            "la_concat": lambda: space.layer_aggregate(
                "la_concat", raw, self.params["p_la"]),
            "la_max": lambda: space.layer_aggregate("la_max", raw),
        })

    def _connect(self, sel: Selection, k: int, h_prev: Tensor,
                 h_new: Tensor) -> Tensor:
        if "intra_only" in self.flags:
            return h_new
        return self._mix(sel, f"lc_l{k}", {
            "skip": lambda: h_new,
            "lc_sum": lambda: T.add(h_prev, h_new),
            "lc_concat": lambda: T.matmul(T.concat([h_prev, h_new], axis=1),
                                          self.params[f"p_lc_{k}"]),
        })

    def node_embeddings(self, sel: Selection, batch: BatchedGraphs,
                        dropout: float = 0.0, dropout_rng=None) -> Tensor:
        """Shared trunk for the homogeneous tasks: final per-node embeddings."""
        h = T.matmul(Tensor(batch.x), self.params["w_in"])
        raw: list[Tensor] = []
        connected: list[Tensor] = []
        for k in range(self.layer_count):
            out = self.homo_layer_forward(sel, k, h, batch, dropout, dropout_rng)
            raw.append(out)
            h = self._connect(sel, k, h, out)
            connected.append(h)
        return self._inter_layer(sel, raw, connected)

    def _pool_pairs(self, sel: Selection, final: Tensor,
                    targets: np.ndarray) -> Tensor:
        h_u = T.gather_rows(final, targets[:, 0])
        h_v = T.gather_rows(final, targets[:, 1])
        return self._mix(sel, "pool", {
            "sum": lambda: space.pool_pair("sum", h_u, h_v),
            "max": lambda: space.pool_pair("max", h_u, h_v),
            "concat": lambda: space.pool_pair("concat", h_u, h_v,
                                              self.params["p_pool"]),
            "diff": lambda: space.pool_pair("diff", h_u, h_v),
        })

    def forward(self, sel: Selection, batch: BatchedGraphs,
                dropout: float = 0.0, dropout_rng=None) -> Tensor:
        """Task logits: (B,) link logits, (N, C) node logits, (G, C) graph logits."""
        final = self.node_embeddings(sel, batch, dropout, dropout_rng)
        if self.task == "lp_homo":
            if batch.targets is None:
                raise ContractError("link prediction batch lacks target pairs")
            pooled = self._pool_pairs(sel, final, batch.targets)
            logits = T.add(T.matmul(pooled, self.params["w_head"]),
                           self.params["b_head"])
            return T.reshape(logits, (batch.graph_count,))
        if self.task == "nc":
            return T.add(T.matmul(final, self.params["w_head"]),
                         self.params["b_head"])
        if self.task == "gc":
            pooled = self._mix(sel, "pool", {
                "global_add_pool": lambda: space.pool_graph(
                    "global_add_pool", final, batch.graph_ids, batch.graph_count),
                "global_mean_pool": lambda: space.pool_graph(
                    "global_mean_pool", final, batch.graph_ids, batch.graph_count),
                "global_max_pool": lambda: space.pool_graph(
                    "global_max_pool", final, batch.graph_ids, batch.graph_count),
            })
            return T.add(T.matmul(pooled, self.params["w_head"]),
                         self.params["b_head"])
        raise ContractError(f"forward does not handle task '{self.task}'")

    # -- relational forward --------------------------------------------------

    def _lambda_weights(self, k: int) -> tuple[Tensor, Tensor, Tensor]:
        if "shared_lambda" in self.flags:
            w = self.params[f"w_lam_{k}"]
            return w, w, w
        return (self.params[f"w_o_{k}"], self.params[f"w_i_{k}"],
                self.params[f"w_sl_{k}"])

    def _compose_mix(self, sel: Selection, k: int, h_u: Tensor,
                     h_e: Tensor) -> Tensor:
        return self._mix(sel, f"phi_l{k}", {
            "sub": lambda: space.compose("sub", h_u, h_e),
            "mult": lambda: space.compose("mult", h_u, h_e),
            "corr": lambda: space.compose("corr", h_u, h_e),
        })

    def kg_layer_forward(self, sel: Selection, k: int, h: Tensor, r: Tensor,
                         kg: KGArrays, dropout: float = 0.0,
                         dropout_rng=None) -> tuple[Tensor, Tensor]:
        """One relational layer; returns (new node states, new edge states).

        Edge states feeding the messages are the pre-update ones; the
        relation transform applies at the end of the layer.
        """
        w_o, w_i, w_sl = self._lambda_weights(k)
        h_src = T.gather_rows(h, kg.src)
        if "no_edge_embedding" in self.flags:
            phi = h_src
        else:
            phi = self._compose_mix(sel, k, h_src, T.gather_rows(r, kg.rel))
        msg = T.add(T.multiply(T.matmul(phi, w_o), Tensor(kg.original_mask)),
                    T.multiply(T.matmul(phi, w_i), Tensor(kg.inverse_mask)))
        m = self._aggregate(sel, k, msg, kg.dst, kg.entity_count)
        if "no_edge_embedding" in self.flags:
            self_in = h
        else:
            sl_rows = np.full(kg.entity_count, kg.self_loop_id, dtype=np.intp)
            self_in = self._compose_mix(sel, k, h, T.gather_rows(r, sl_rows))
        c = self._combine(sel, k, T.matmul(self_in, w_sl), m)
        out = self._activate(sel, k, c)
        if dropout > 0.0 and dropout_rng is not None:
            out = T.dropout_apply(
                out, T.make_dropout_mask(out.data.shape, dropout, dropout_rng))
        return out, T.matmul(r, self.params[f"w_rel_{k}"])

    def entity_embeddings(self, sel: Selection, kg: KGArrays,
                          dropout: float = 0.0,
                          dropout_rng=None) -> tuple[Tensor, Tensor]:
        """Final (entity matrix, relation matrix) after all layers."""
        h = self.params["ent_emb"]
        r = self.params["rel_emb"]
        raw: list[Tensor] = []
        connected: list[Tensor] = []
        for k in range(self.layer_count):
            out, r = self.kg_layer_forward(sel, k, h, r, kg, dropout, dropout_rng)
            raw.append(out)
            h = self._connect(sel, k, h, out)
            connected.append(h)
        return self._inter_layer(sel, raw, connected), r

    def forward_kg(self, sel: Selection, kg: KGArrays, heads: np.ndarray,
                   rels: np.ndarray, dropout: float = 0.0,
                   dropout_rng=None) -> Tensor:
        """1-N scores: each (head, relation) query against every entity."""
        z, r_final = self.entity_embeddings(sel, kg, dropout, dropout_rng)
        head_emb = T.gather_rows(z, np.asarray(heads, dtype=np.intp))
        if "no_edge_embedding" in self.flags:
            feed = head_emb
        else:
            rel_emb = T.gather_rows(r_final, np.asarray(rels, dtype=np.intp))
            feed = T.concat([head_emb, rel_emb,
                             T.multiply(head_emb, rel_emb)], axis=1)
        q = T.tanh(T.matmul(feed, self.params["w_q"]))
        return T.matmul(q, T.transpose(z))


def build_supernet(task: str, dims: int, layer_count: int, ablation=(),
                   **kwargs) -> Supernet:
    """Construct a Supernet; its slot catalog is available as ``.slots``."""
    return Supernet(task, dims, layer_count, ablation, **kwargs)


def supernet_forward(net: Supernet, sel: Selection, instance,
                     **kwargs) -> Tensor:
    """Dispatch a forward pass on the instance type."""
    sel.validate(net.slots)
    if net.task == "kg":
        kg, heads, rels = instance
        return net.forward_kg(sel, kg, heads, rels, **kwargs)
    return net.forward(sel, instance, **kwargs)
