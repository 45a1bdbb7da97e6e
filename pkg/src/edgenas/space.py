"""Searchable slot catalog and the candidate operator primitives.

Each slot names an ordered list of candidate operators; a Selection assigns
every slot a mixing vector over its candidates.  Candidates that change
width (any concat) carry a learned projection back to the model width, so
mixtures stay well-typed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, ContractError, DimensionError
from .tensor import Tensor

ABLATION_FLAGS = ("intra_only", "diff_pool", "shared_delta", "shared_lambda",
                  "no_edge_embedding", "darts_mode")

TASKS = ("lp_homo", "kg", "nc", "gc")

PHI_CANDIDATES = ("sub", "mult", "corr")
AGG_CANDIDATES = ("sum", "mean", "max")
COM_CANDIDATES = ("sum", "concat")
ACT_CANDIDATES = ("relu", "prelu")
ACT_CANDIDATES_KG = ("tanh",)
LC_CANDIDATES = ("skip", "lc_sum", "lc_concat")
LA_CANDIDATES = ("skip", "la_concat", "la_max")
POOL_CANDIDATES_LP = ("sum", "max", "concat")
POOL_CANDIDATES_GC = ("global_add_pool", "global_mean_pool", "global_max_pool")


@dataclass(frozen=True)
class SlotCatalog:
    """One searchable decision point and its ordered candidates."""

    slot_id: str
    kind: str           # phi | agg | com | act | layer_connect | layer_agg | pool
    candidates: tuple[str, ...]
    layer: int | None   # None marks a global (inter-layer or pooling) slot

    def __post_init__(self):
        if not self.candidates:
            raise ContractError(f"slot {self.slot_id} has no candidates")
        if len(set(self.candidates)) != len(self.candidates):
            raise ContractError(f"slot {self.slot_id} has duplicate candidates")


@dataclass
class Selection:
    """Per-slot mixing vectors theta over candidates."""

    thetas: dict[str, Tensor]
    mode: str = "relaxed"   # sampled-one-hot | relaxed | derived

    def validate(self, slots: list[SlotCatalog]) -> None:
        for slot in slots:
            theta = self.thetas.get(slot.slot_id)
            if theta is None:
                raise ContractError(f"selection missing slot {slot.slot_id}")
            v = theta.data
            if v.shape != (len(slot.candidates),):
                raise ContractError(
                    f"slot {slot.slot_id}: theta has {v.shape}, "
                    f"expected ({len(slot.candidates)},)")
            if np.any(v < 0) or abs(float(v.sum()) - 1.0) > 1e-9:
                raise ContractError(
                    f"slot {slot.slot_id}: theta must be a probability vector")
            if self.mode in ("sampled-one-hot", "derived"):
                if np.sum(v == 1.0) != 1 or np.sum(v == 0.0) != len(v) - 1:
                    raise ContractError(
                        f"slot {slot.slot_id}: mode {self.mode} requires one-hot theta")

    def is_one_hot(self, slot_id: str) -> bool:
        v = self.thetas[slot_id].data
        return (not self.thetas[slot_id].requires_grad
                and np.sum(v == 1.0) == 1 and np.sum(v == 0.0) == len(v) - 1)


def validate_ablation(ablation) -> frozenset:
    flags = frozenset(ablation or ())
    unknown = flags - set(ABLATION_FLAGS)
    if unknown:
        raise ConfigurationError(f"unknown ablation flags: {sorted(unknown)}")
    return flags


def build_slots(task: str, layer_count: int, ablation=()) -> list[SlotCatalog]:
    """Instantiate the per-task slot catalog.

    intra_only removes the inter-layer (layer_connect, layer_agg) slots;
    diff_pool pins the pooling slot to the fixed difference readout;
    no_edge_embedding drops the composition slots entirely because the
    message function no longer consumes edge embeddings.
    """
    if task not in TASKS:
        raise ConfigurationError(f"unknown task '{task}'")
    if layer_count < 1:
        raise ConfigurationError("layer_count must be at least 1")
    flags = validate_ablation(ablation)
    slots: list[SlotCatalog] = []
    for k in range(layer_count):
        if task == "kg" and "no_edge_embedding" not in flags:
            slots.append(SlotCatalog(f"phi_l{k}", "phi", PHI_CANDIDATES, k))
        slots.append(SlotCatalog(f"agg_l{k}", "agg", AGG_CANDIDATES, k))
        slots.append(SlotCatalog(f"com_l{k}", "com", COM_CANDIDATES, k))
        act = ACT_CANDIDATES_KG if task == "kg" else ACT_CANDIDATES
        slots.append(SlotCatalog(f"act_l{k}", "act", act, k))
    if "intra_only" not in flags:
        for k in range(layer_count):
            slots.append(SlotCatalog(f"lc_l{k}", "layer_connect", LC_CANDIDATES, k))
        slots.append(SlotCatalog("la", "layer_agg", LA_CANDIDATES, None))
    if task == "lp_homo":
        pool = ("diff",) if "diff_pool" in flags else POOL_CANDIDATES_LP
        slots.append(SlotCatalog("pool", "pool", pool, None))
    elif task == "gc":
        if "diff_pool" in flags:
            raise ConfigurationError("diff_pool applies only to pair readouts")
        slots.append(SlotCatalog("pool", "pool", POOL_CANDIDATES_GC, None))
    return slots


# ---------------------------------------------------------------------------
# candidate primitives (all batched over leading row axis)


def compose(kind: str, h_u: Tensor, h_e: Tensor) -> Tensor:
    """Merge a node embedding with an edge embedding."""
    if h_u.data.shape != h_e.data.shape:
        raise DimensionError(
            f"compose operands differ: {h_u.data.shape} vs {h_e.data.shape}")
    if kind == "sub":
        return T.subtract(h_u, h_e)
    if kind == "mult":
        return T.multiply(h_u, h_e)
    if kind == "corr":
        return T.circular_correlation(h_u, h_e)
    raise ContractError(f"unknown composition kind '{kind}'")


def layer_connect(kind: str, h_prev: Tensor, h_new: Tensor,
                  proj: Tensor | None = None) -> Tensor:
    """Mix a layer's input state into its output (width preserved)."""
    if h_prev.data.shape != h_new.data.shape:
        raise DimensionError("layer_connect operands must share a shape")
    if kind == "skip":
        return h_new
    if kind == "lc_sum":
        return T.add(h_prev, h_new)
    if kind == "lc_concat":
        if proj is None:
            raise ContractError("lc_concat requires a projection")
        return T.matmul(T.concat([h_prev, h_new], axis=1), proj)
    raise ContractError(f"unknown layer_connect kind '{kind}'")


def layer_aggregate(kind: str, outputs: list[Tensor],
                    proj: Tensor | None = None) -> Tensor:
    """Combine the raw (pre-connectivity) outputs of all layers."""
    if not outputs:
        raise ContractError("layer_aggregate requires at least one output")
    width = outputs[0].data.shape
    for h in outputs[1:]:
        if h.data.shape != width:
            raise DimensionError("layer outputs have inconsistent widths")
    if kind == "skip":
        return outputs[-1]
    if kind == "la_concat":
        if proj is None:
            raise ContractError("la_concat requires a projection")
        return T.matmul(T.concat(outputs, axis=1), proj)
    if kind == "la_max":
        acc = outputs[0]
        for h in outputs[1:]:
            acc = T.maximum(acc, h)
        return acc
    raise ContractError(f"unknown layer_agg kind '{kind}'")


def pool_pair(kind: str, h_u: Tensor, h_v: Tensor,
              proj: Tensor | None = None) -> Tensor:
    """Readout over a candidate link's two endpoint embeddings."""
    if h_u.data.shape != h_v.data.shape:
        raise DimensionError("pool_pair operands must share a shape")
    if kind == "sum":
        return T.add(h_u, h_v)
    if kind == "max":
        return T.maximum(h_u, h_v)
    if kind == "concat":
        if proj is None:
            raise ContractError("pool concat requires a projection")
        return T.matmul(T.concat([h_u, h_v], axis=1), proj)
    if kind == "diff":
        return T.abs_(T.subtract(h_u, h_v))
    raise ContractError(f"unknown pair pooling kind '{kind}'")


def pool_graph(kind: str, h: Tensor, graph_ids: np.ndarray,
               num_graphs: int) -> Tensor:
    """Whole-graph readout; ``graph_ids`` must be sorted non-decreasing."""
    if num_graphs < 1:
        raise ContractError("pool_graph requires a non-empty target set")
    if kind == "global_add_pool":
        return T.segment_sum(h, graph_ids, num_graphs)
    if kind == "global_mean_pool":
        return T.segment_mean(h, graph_ids, num_graphs)
    if kind == "global_max_pool":
        return T.segment_max(h, graph_ids, num_graphs)
    raise ContractError(f"unknown graph pooling kind '{kind}'")
