"""ROC curve and AUC.

AUC is the Mann-Whitney statistic: the fraction of (positive, negative)
pairs where the positive scores higher, ties counted half. Computed from
average ranks after one sort, so it matches the O(n^2) pairwise definition
exactly (both are rationals over n_pos * n_neg).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    """Evaluation input cannot be scored (e.g. one class missing)."""


def _validated(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    l = np.asarray(labels, dtype=np.float64)
    if s.ndim != 1 or l.ndim != 1 or s.shape != l.shape:
        raise MetricError(f"scores {s.shape} and labels {l.shape} must be equal-length 1-D")
    if not np.all((l == 0.0) | (l == 1.0)):
        raise MetricError("labels must all be 0 or 1")
    n_pos = int(l.sum())
    n_neg = l.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"need at least one of each class, got {n_pos} pos / {n_neg} neg")
    return s, l, n_pos, n_neg


def _average_ranks(s: np.ndarray) -> np.ndarray:
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # mean of 1-based ranks i+1..j+1
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Area under the ROC curve via average ranks."""
    s, l, n_pos, n_neg = _validated(scores, labels)
    ranks = _average_ranks(s)
    rank_sum = ranks[l == 1.0].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass
class RocCurve:
    points: list[tuple[float, float]]  # (FPR, TPR) from (0,0) to (1,1)
    auc: float


def roc_points(scores, labels) -> RocCurve:
    """ROC curve swept over the distinct scores, highest threshold first.

    The trapezoidal area under the returned points equals auc() up to float
    rounding; tied scores are collapsed into single sweep steps, which is
    what gives ties their half credit.
    """
    s, l, n_pos, n_neg = _validated(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    l_sorted = l[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j + 1 < n and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        tp += int(l_sorted[i:j + 1].sum())
        fp += (j - i + 1) - int(l_sorted[i:j + 1].sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j + 1
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y1 + y0) / 2.0
    return RocCurve(points=points, auc=area)
