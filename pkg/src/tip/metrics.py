"""Ranking metrics for one relation's positive and negative scores."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def _check(pos, neg) -> tuple[np.ndarray, np.ndarray]:
    pos = np.asarray(pos, dtype=np.float64).reshape(-1)
    neg = np.asarray(neg, dtype=np.float64).reshape(-1)
    if not len(pos) or not len(neg):
        raise MetricError("need at least one positive and one negative score")
    return pos, neg


def auroc(pos, neg) -> float:
    """Mann-Whitney ``P(pos > neg) + 0.5 P(pos == neg)``, exact."""
    pos, neg = _check(pos, neg)
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    n_pos, n_neg = len(pos), len(neg)
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(pos, neg) -> float:
    """Average precision ``sum_k (R_k - R_{k-1}) P_k`` over descending thresholds.

    Tied scores form a single threshold.
    """
    pos, neg = _check(pos, neg)
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    tp = np.cumsum(labels)
    fp = np.cumsum(1.0 - labels)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tp, fp = tp[ends], fp[ends]
    precision = tp / (tp + fp)
    recall = tp / len(pos)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def ap_at_k(pos, neg, k: int = 50) -> float:
    """Average precision over the ``k`` highest-scored pairs.

    Mean of precision@j over the hit ranks j <= k; 0 when there is no hit.
    On equal scores negatives rank first.  With fewer than ``k`` pairs all
    of them are used.
    """
    if k < 1:
        raise MetricError(f"k must be >= 1, got {k}")
    pos = np.asarray(pos, dtype=np.float64).reshape(-1)
    neg = np.asarray(neg, dtype=np.float64).reshape(-1)
    scores = np.concatenate([neg, pos])
    labels = np.concatenate([np.zeros(len(neg)), np.ones(len(pos))])
    order = np.argsort(-scores, kind="stable")[:k]
    hits = labels[order]
    if not hits.any():
        return 0.0
    ranks = np.arange(1, len(hits) + 1)
    precision = np.cumsum(hits) / ranks
    return float(precision[hits == 1].mean())
