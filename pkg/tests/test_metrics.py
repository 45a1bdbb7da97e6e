import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgenas.errors import ContractError
from edgenas.graphs import Graph
from edgenas.metrics import (MetricsReport, accuracy, auc,
                             common_neighbors_baseline, filtered_rank,
                             mrr_hits)


def auc_pairwise(pos, neg):
    """Definitional O(p*n) double loop."""
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_auc_examples():
    assert auc([0.9, 0.8], [0.1, 0.2]) == 1.0
    assert auc([0.8, 0.4], [0.6, 0.2]) == 0.75
    assert auc([0.5], [0.5]) == 0.5
    with pytest.raises(ContractError):
        auc([], [0.5])
    with pytest.raises(ContractError):
        auc([0.5], [])


def test_auc_matches_pairwise_oracle_randomized():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = rng.integers(1, 30)
        n = rng.integers(1, 30)
        # quantized scores force plenty of ties
        pos = np.round(rng.random(p), 1)
        neg = np.round(rng.random(n), 1)
        assert auc(pos, neg) == pytest.approx(auc_pairwise(pos, neg), abs=1e-12)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=30),
       st.lists(st.integers(0, 5), min_size=1, max_size=30))
@settings(max_examples=60, deadline=None)
def test_auc_pairwise_property(pos, neg):
    assert auc(pos, neg) == pytest.approx(auc_pairwise(pos, neg), abs=1e-12)


def test_mrr_hits_examples():
    out = mrr_hits(np.array([1]))
    assert out["mrr"] == 1.0 and out["hits@1"] == 1.0
    out = mrr_hits(np.array([1, 2, 4]))
    assert out["mrr"] == pytest.approx((1 + 0.5 + 0.25) / 3)
    assert out["hits@3"] == pytest.approx(2 / 3)
    assert mrr_hits(np.array([11, 40]))["hits@10"] == 0.0
    with pytest.raises(ContractError):
        mrr_hits(np.array([], dtype=int))
    with pytest.raises(ContractError):
        mrr_hits(np.array([0]))


@given(st.lists(st.integers(1, 50), min_size=1, max_size=20),
       st.integers(0, 19))
@settings(max_examples=50, deadline=None)
def test_mrr_hits_monotone_in_rank_improvement(ranks, which):
    ranks = np.asarray(ranks)
    which = which % len(ranks)
    improved = ranks.copy()
    improved[which] = max(1, improved[which] - 1)
    before = mrr_hits(ranks)
    after = mrr_hits(improved)
    for key in before:
        assert after[key] >= before[key] - 1e-12


def test_filtered_rank_basic():
    scores = np.array([0.9, 0.8, 0.7, 0.6])
    assert filtered_rank(scores, target=2, known_true=[]) == 3
    # filtering a known-true higher scorer improves the rank
    assert filtered_rank(scores, target=2, known_true=[0]) == 2
    # the target itself in the filter set is ignored
    assert filtered_rank(scores, target=2, known_true=[2]) == 3


@given(st.integers(0, 9), st.integers(0, 9), st.integers(0, 1000))
@settings(max_examples=50, deadline=None)
def test_filtered_rank_never_worsened_by_filtering(target, extra, seed):
    scores = np.random.default_rng(seed).random(10)
    base = filtered_rank(scores, target, known_true=[])
    filtered = filtered_rank(scores, target, known_true=[extra])
    assert filtered <= base


def test_accuracy():
    assert accuracy([1, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)
    with pytest.raises(ContractError):
        accuracy([1], [1, 2])


def test_common_neighbors_examples():
    tri = Graph(3, [(0, 1), (1, 2), (0, 2)])
    assert common_neighbors_baseline(tri, [(0, 1)]) == [1.0]
    disc = Graph(4, [(0, 1), (2, 3)])
    assert common_neighbors_baseline(disc, [(0, 2)]) == [0.0]


def test_metrics_report_summary_and_round_trip():
    report = MetricsReport(task="nc", dataset="toy")
    values = [0.91, 0.87, 0.95, 0.89]
    for seed, v in enumerate(values):
        report.record("accuracy", seed, v)
    assert report.run_count("accuracy") == 4
    assert report.mean("accuracy") == pytest.approx(np.mean(values), abs=1e-12)
    assert report.std("accuracy") == pytest.approx(np.std(values), abs=1e-12)
    clone = MetricsReport.from_json(report.to_json())
    assert clone.per_seed == report.per_seed
    csv = report.to_csv().splitlines()
    assert csv[0] == "dataset,task,seed,metric,value"
    assert len(csv) == 5
    assert csv[1].startswith("toy,nc,0,accuracy,")
    with pytest.raises(ContractError):
        report.mean("f1")
