"""Classification metrics used to judge both models: pairwise AUC and
recall at a precision floor."""

from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    """Metric is undefined for the given inputs (e.g. one class only)."""


def _check_two_classes(labels: np.ndarray) -> None:
    if labels.size == 0 or labels.all() or not labels.any():
        raise MetricError("metric needs at least one positive and one negative")


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative,
    counting ties as half. Computed from midranks in O(n log n)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape:
        raise MetricError(f"scores shape {s.shape} != labels shape {y.shape}")
    _check_two_classes(y)
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    ranks = np.empty(s.size, dtype=np.float64)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    rank_sum = ranks[y].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def recall_at_precision(scores, labels, p_target: float = 0.7) -> float:
    """Max recall over score thresholds whose precision reaches `p_target`;
    0 when no threshold qualifies."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape:
        raise MetricError(f"scores shape {s.shape} != labels shape {y.shape}")
    _check_two_classes(y)
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    tp = np.cumsum(y_sorted)
    predicted = np.arange(1, s.size + 1)
    # Thresholds sit at the last index of each tied-score run.
    is_run_end = np.ones(s.size, dtype=bool)
    is_run_end[:-1] = s_sorted[:-1] != s_sorted[1:]
    precision = tp[is_run_end] / predicted[is_run_end]
    recall = tp[is_run_end] / tp[-1]
    qualifying = precision >= p_target
    if not qualifying.any():
        return 0.0
    return float(recall[qualifying].max())
