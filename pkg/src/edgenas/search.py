"""Stochastic differentiable architecture search over the supernet slots.

Architecture weights alpha live as unconstrained logits (exponentiated on
use).  Each mini-batch samples a relaxed one-hot theta per slot from the
concrete distribution, the task loss backpropagates into both the network
weights and the logits, and a single Adam instance updates them jointly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, ContractError, NumericError
from .optim import Adam
from .space import Selection, SlotCatalog
from .supernet import Supernet
from .tensor import Tape, Tensor, backward


@dataclass
class ArchParams:
    """Per-slot architecture logits; alpha = exp(logit) stays positive."""

    logits: dict[str, Tensor]

    @classmethod
    def for_slots(cls, slots: list[SlotCatalog]) -> "ArchParams":
        return cls({s.slot_id: Tensor(np.zeros(len(s.candidates)),
                                      requires_grad=True) for s in slots})

    def parameters(self) -> list[Tensor]:
        return list(self.logits.values())

    def alphas(self) -> dict[str, np.ndarray]:
        return {sid: np.exp(t.data) for sid, t in self.logits.items()}

    def snapshot(self) -> dict[str, list[float]]:
        return {sid: [float(a) for a in alpha]
                for sid, alpha in self.alphas().items()}


def sample_architecture(arch: ArchParams, tau: float,
                        rng: np.random.Generator) -> Selection:
    """Concrete-distribution sample, differentiable w.r.t. the logits.

    theta_o = softmax((log alpha_o - log(-log U_o)) / tau) with U_o uniform
    on the open interval (0, 1); boundary draws are redrawn.
    """
    if tau <= 0:
        raise ContractError("tau must be positive")
    thetas: dict[str, Tensor] = {}
    for sid, logit in arch.logits.items():
        n = logit.data.shape[0]
        u = rng.random(n)
        while np.any(u <= 0.0) or np.any(u >= 1.0):
            u = rng.random(n)
        gumbel = -np.log(-np.log(u))
        scaled = T.multiply(T.add(logit, Tensor(gumbel)), Tensor(1.0 / tau))
        thetas[sid] = T.softmax(scaled, axis=-1)
    return Selection(thetas, mode="relaxed")


def mix_darts(arch: ArchParams) -> Selection:
    """Deterministic softmax relaxation: theta = alpha / sum(alpha)."""
    thetas = {sid: T.softmax(logit, axis=-1)
              for sid, logit in arch.logits.items()}
    return Selection(thetas, mode="relaxed")


@dataclass
class DerivedArchitecture:
    """A concrete child network: one chosen candidate per slot."""

    task: str
    dims: int
    layer_count: int
    ablation: list[str]
    choices: dict[str, str]
    metrics: dict | None = None
    weights_ref: str | None = None

    def selection(self, slots: list[SlotCatalog]) -> Selection:
        thetas = {}
        for slot in slots:
            name = self.choices.get(slot.slot_id)
            if name not in slot.candidates:
                raise ContractError(
                    f"slot {slot.slot_id}: unknown choice {name!r}")
            v = np.zeros(len(slot.candidates))
            v[slot.candidates.index(name)] = 1.0
            thetas[slot.slot_id] = Tensor(v)
        return Selection(thetas, mode="derived")

    def to_json(self) -> str:
        payload = {
            "task": self.task, "dims": self.dims,
            "layer_count": self.layer_count,
            "ablation": sorted(self.ablation),
            "choices": self.choices,
        }
        if self.metrics is not None:
            payload["metrics"] = self.metrics
        if self.weights_ref is not None:
            payload["weights_ref"] = self.weights_ref
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DerivedArchitecture":
        blob = json.loads(text)
        try:
            return cls(task=blob["task"], dims=blob["dims"],
                       layer_count=blob["layer_count"],
                       ablation=list(blob.get("ablation", [])),
                       choices=dict(blob["choices"]),
                       metrics=blob.get("metrics"),
                       weights_ref=blob.get("weights_ref"))
        except KeyError as exc:
            raise ConfigurationError(f"architecture JSON missing {exc}") from None


def derive_architecture(arch: ArchParams, net: Supernet) -> DerivedArchitecture:
    """One-hot at argmax alpha per slot; ties break to the lowest index."""
    choices = {}
    for slot in net.slots:
        alpha = np.exp(arch.logits[slot.slot_id].data)
        choices[slot.slot_id] = slot.candidates[int(np.argmax(alpha))]
    return DerivedArchitecture(task=net.task, dims=net.dims,
                               layer_count=net.layer_count,
                               ablation=sorted(net.flags), choices=choices)


@dataclass
class SearchLog:
    """One record per completed search epoch."""

    records: list[dict] = field(default_factory=list)

    def append(self, **record) -> None:
        self.records.append(record)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n"
                       for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "SearchLog":
        return cls([json.loads(line) for line in text.splitlines() if line])


def tau_schedule(epoch: int, epochs: int, tau0: float, tau_final: float) -> float:
    """Exponential anneal from tau0 (epoch 0) to tau_final (last epoch)."""
    if not tau0 >= tau_final > 0:
        raise ConfigurationError("need tau0 >= tau_final > 0")
    if epochs <= 1:
        return tau_final
    return tau0 * (tau_final / tau0) ** (epoch / (epochs - 1))


def _step(opt: Adam, params: list[Tensor], grads: dict[int, np.ndarray]) -> None:
    opt.step([grads.get(id(p), np.zeros_like(p.data)) for p in params])


def _theta_snapshot(sel: Selection) -> dict[str, list[float]]:
    return {sid: [float(x) for x in t.data] for sid, t in sel.thetas.items()}


def search(net: Supernet, adapter, *, epochs: int, lr: float,
           tau0: float = 1.0, tau_final: float = 0.1,
           seed: int = 0, dropout: float = 0.0):
    """Joint (weights, logits) optimization; returns (SearchLog, DerivedArchitecture).

    Per batch one theta is sampled and a single Adam step updates the
    network weights and architecture logits together.  Validation after
    each epoch scores the currently derived one-hot child; the best
    logit snapshot is the one finally derived.  With the darts_mode flag
    theta is the deterministic softmax of the logits instead of a sample.
    """
    if epochs < 1:
        raise ConfigurationError("epochs must be at least 1")
    arch = ArchParams.for_slots(net.slots)
    params = net.parameters() + arch.parameters()
    opt = Adam(params, lr=lr)
    rng_sample = np.random.default_rng([seed, 101])
    rng_batch = np.random.default_rng([seed, 102])
    rng_dropout = np.random.default_rng([seed, 103])
    darts = "darts_mode" in net.flags
    log = SearchLog()
    best_val = -math.inf
    best_logits = {sid: t.data.copy() for sid, t in arch.logits.items()}
    for epoch in range(epochs):
        tau = tau_schedule(epoch, epochs, tau0, tau_final)
        epoch_loss = 0.0
        n_batches = 0
        last_theta: dict[str, list[float]] = {}
        for batch in adapter.train_batches(rng_batch):
            with Tape():
                sel = mix_darts(arch) if darts else sample_architecture(
                    arch, tau, rng_sample)
                loss = adapter.loss(net, sel, batch, dropout=dropout,
                                    dropout_rng=rng_dropout)
                if not np.isfinite(loss.data):
                    raise NumericError(
                        f"divergent loss at epoch {epoch}, batch {n_batches}: "
                        f"{float(loss.data)}")
                grads = backward(loss)
            _step(opt, params, grads)
            epoch_loss += float(loss.data)
            n_batches += 1
            last_theta = _theta_snapshot(sel)
        if n_batches == 0:
            raise ContractError("adapter produced no training batches")
        val = adapter.validate(net, derive_architecture(arch, net).selection(net.slots))
        if val > best_val:
            best_val = val
            best_logits = {sid: t.data.copy() for sid, t in arch.logits.items()}
        log.append(epoch=epoch, tau=tau, theta=last_theta,
                   train_loss=epoch_loss / n_batches, val_metric=float(val),
                   alpha=arch.snapshot())
    best = ArchParams({sid: Tensor(v) for sid, v in best_logits.items()})
    return log, derive_architecture(best, net)


def retrain(net: Supernet, derived: DerivedArchitecture, adapter, *,
            epochs: int, lr: float, seed: int = 0, dropout: float = 0.0,
            patience: int = 20):
    """Train only the weights of the one-hot child network.

    The caller supplies a freshly initialized supernet; early stopping
    triggers after ``patience`` validations without improvement, and the
    best-validation weights are restored before returning.
    Returns (validation curve, best validation metric).
    """
    if derived.task != net.task or derived.layer_count != net.layer_count:
        raise ContractError("derived architecture does not match the network")
    sel = derived.selection(net.slots)
    params = net.parameters()
    opt = Adam(params, lr=lr)
    rng_batch = np.random.default_rng([seed, 202])
    rng_dropout = np.random.default_rng([seed, 203])
    best_val = -math.inf
    best_weights = None
    stale = 0
    curve: list[float] = []
    for epoch in range(epochs):
        for batch in adapter.train_batches(rng_batch):
            with Tape():
                loss = adapter.loss(net, sel, batch, dropout=dropout,
                                    dropout_rng=rng_dropout)
                if not np.isfinite(loss.data):
                    raise NumericError(f"divergent loss at epoch {epoch}")
                grads = backward(loss)
            _step(opt, params, grads)
        val = adapter.validate(net, sel)
        curve.append(float(val))
        if val > best_val:
            best_val = val
            best_weights = [p.data.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    if best_weights is not None:
        for p, w in zip(params, best_weights):
            p.data = w
    return curve, best_val
