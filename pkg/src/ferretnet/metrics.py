"""Accuracy and average precision for binary real/fake scores."""
from __future__ import annotations

import numpy as np

from .validation import check_scores_labels


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of samples where ``score >= threshold`` agrees with the label."""
    s, y = check_scores_labels(scores, labels)
    return float(np.mean((s >= threshold).astype(np.int64) == y))


def average_precision(scores, labels) -> float:
    """Non-interpolated AP: mean of precision@k over the ranks k of the positives.

    Samples are ranked by descending score; equal scores keep their
    original order.
    """
    s, y = check_scores_labels(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positive labels")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    ranks = np.flatnonzero(hits) + 1
    precision_at_hits = np.arange(1, n_pos + 1) / ranks
    return float(precision_at_hits.sum() / n_pos)
