"""Ranking and classification metrics plus a common-neighbors oracle."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError
from .graphs import Graph


def auc(pos_scores, neg_scores) -> float:
    """Probability a random positive outscores a random negative (ties 0.5).

    Computed with the rank-sum statistic, which equals the pairwise
    definition exactly.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ContractError("auc requires non-empty score lists")
    ranks = rankdata(np.concatenate([pos, neg]))
    rank_sum = ranks[:pos.size].sum()
    return float((rank_sum - pos.size * (pos.size + 1) / 2.0)
                 / (pos.size * neg.size))


def mrr_hits(ranks, n_list=(1, 3, 10)) -> dict[str, float]:
    """Mean reciprocal rank and Hits@N over integer ranks (1 = best)."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ContractError("mrr_hits requires at least one rank")
    if np.any(ranks < 1) or not np.issubdtype(ranks.dtype, np.integer):
        raise ContractError("ranks must be integers >= 1")
    out = {"mrr": float(np.mean(1.0 / ranks))}
    for n in n_list:
        out[f"hits@{n}"] = float(np.mean(ranks <= n))
    return out


def filtered_rank(scores: np.ndarray, target: int, known_true) -> int:
    """Rank of ``target`` after discarding other known-true candidates.

    Ties with surviving competitors resolve optimistically (the target
    ranks ahead of equal scores).
    """
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.zeros(scores.shape[0], dtype=bool)
    for idx in known_true:
        mask[idx] = True
    mask[target] = False
    better = np.sum((scores > scores[target]) & ~mask)
    return int(better) + 1


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ContractError("accuracy needs aligned non-empty arrays")
    return float(np.mean(predictions == labels))


def common_neighbors_baseline(graph: Graph, links) -> list[float]:
    """Heuristic link score: count of shared neighbors on the graph."""
    scores = []
    for u, v in links:
        nu = set(graph.neighbors(u))
        scores.append(float(len(nu.intersection(graph.neighbors(v)))))
    return scores


@dataclass
class MetricsReport:
    """Per-seed metric values with recomputable mean and deviation."""

    task: str
    dataset: str
    per_seed: dict[str, dict[int, float]] = field(default_factory=dict)

    def record(self, metric: str, seed: int, value: float) -> None:
        self.per_seed.setdefault(metric, {})[int(seed)] = float(value)

    def values(self, metric: str) -> list[float]:
        by_seed = self.per_seed.get(metric)
        if not by_seed:
            raise ContractError(f"no values recorded for metric '{metric}'")
        return [by_seed[s] for s in sorted(by_seed)]

    def mean(self, metric: str) -> float:
        return float(np.mean(self.values(metric)))

    def std(self, metric: str) -> float:
        # population deviation over the recorded runs
        return float(np.std(self.values(metric)))

    def run_count(self, metric: str) -> int:
        return len(self.per_seed.get(metric, {}))

    def to_json(self) -> str:
        payload = {
            "task": self.task,
            "dataset": self.dataset,
            "per_seed": {m: {str(s): v for s, v in sorted(by.items())}
                         for m, by in sorted(self.per_seed.items())},
            "summary": {m: {"mean": self.mean(m), "std": self.std(m),
                            "runs": self.run_count(m)}
                        for m in sorted(self.per_seed)},
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        blob = json.loads(text)
        report = cls(task=blob["task"], dataset=blob["dataset"])
        for metric, by_seed in blob["per_seed"].items():
            for seed, value in by_seed.items():
                report.record(metric, int(seed), value)
        return report

    def to_csv(self) -> str:
        """Flat rows: dataset,task,seed,metric,value."""
        lines = ["dataset,task,seed,metric,value"]
        for metric in sorted(self.per_seed):
            for seed in sorted(self.per_seed[metric]):
                lines.append(f"{self.dataset},{self.task},{seed},{metric},"
                             f"{self.per_seed[metric][seed]!r}")
        return "\n".join(lines) + "\n"
