import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchssl.metrics import MetricError, auc, roc_points
from patchssl.numerics import Rng


def pairwise_auc(scores, labels):
    """O(n^2) oracle: fraction of (pos, neg) pairs won, ties half."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_hand_case():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_perfect_separation():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_all_ties():
    assert auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5


def test_single_class_rejected():
    with pytest.raises(MetricError):
        auc([0.1, 0.9], [1, 1])


def test_matches_pairwise_oracle_with_ties():
    rng = Rng(31)
    for trial in range(200):
        n = 2 + int(rng.integers(0, 63))
        scores = np.round(rng.random(n) * 8) / 8  # coarse grid injects ties
        labels = (rng.random(n) < 0.5).astype(float)
        if labels.min() == labels.max():
            labels[0] = 1.0 - labels[0]
        assert auc(scores, labels) == pairwise_auc(scores, labels)


def test_invariant_under_increasing_transform():
    rng = Rng(32)
    scores = rng.random(50)
    labels = (rng.random(50) < 0.4).astype(float)
    labels[0], labels[1] = 0.0, 1.0
    assert auc(scores, labels) == auc(np.exp(3 * scores), labels)


def test_complement_symmetry_without_ties():
    rng = Rng(33)
    scores = rng.permutation(40) / 40.0  # distinct
    labels = (Rng(34).random(40) < 0.5).astype(float)
    labels[0], labels[1] = 0.0, 1.0
    assert auc(-scores, labels) == pytest.approx(1.0 - auc(scores, labels), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10), st.booleans()), min_size=2, max_size=40))
def test_roc_area_equals_auc(items):
    scores = [s / 10.0 for s, _ in items]
    labels = [1.0 if b else 0.0 for _, b in items]
    if sum(labels) in (0, len(labels)):
        labels[0] = 1.0 - labels[0]
    curve = roc_points(scores, labels)
    assert curve.auc == pytest.approx(auc(scores, labels), abs=1e-12)
    assert curve.points[0] == (0.0, 0.0)
    assert curve.points[-1] == (1.0, 1.0)
    xs = [p[0] for p in curve.points]
    ys = [p[1] for p in curve.points]
    assert all(a <= b + 1e-15 for a, b in zip(xs, xs[1:]))
    assert all(a <= b + 1e-15 for a, b in zip(ys, ys[1:]))


def test_roc_simple_case():
    curve = roc_points([0.9, 0.1], [1, 0])
    assert curve.points == [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
    assert curve.auc == 1.0


def test_roc_matches_pairwise_oracle_on_random_instances():
    rng = Rng(35)
    for trial in range(200):
        n = 2 + int(rng.integers(0, 63))
        scores = np.round(rng.random(n) * 4) / 4
        labels = (rng.random(n) < 0.5).astype(float)
        if labels.min() == labels.max():
            labels[0] = 1.0 - labels[0]
        assert roc_points(scores, labels).auc == pytest.approx(
            pairwise_auc(scores, labels), abs=1e-12)


def test_reversed_scores_flip_auc():
    rng = Rng(36)
    scores = rng.permutation(30) / 30.0
    labels = (Rng(37).random(30) < 0.5).astype(float)
    labels[0], labels[1] = 0.0, 1.0
    assert roc_points([-s for s in scores], labels).auc == pytest.approx(
        1.0 - roc_points(scores, labels).auc, abs=1e-12)
