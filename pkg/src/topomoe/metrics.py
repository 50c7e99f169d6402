"""Evaluation metrics: per-task RMSE and rank-based ROC-AUC."""

from __future__ import annotations

import warnings

import numpy as np


def rmse_per_task(predictions, targets, masks) -> list[float]:
    """Root mean squared error per task over present entries; NaN when a
    task has no present entries."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    m = np.asarray(masks, dtype=np.float64)
    out = []
    for j in range(p.shape[1]):
        present = m[:, j] == 1.0
        if not present.any():
            out.append(float("nan"))
            continue
        se = (p[present, j] - t[present, j]) ** 2
        out.append(float(np.sqrt(se.mean())))
    return out


def roc_auc(scores, labels) -> float:
    """Area under the empirical ROC curve (trapezoidal rule).

    Computed via the rank statistic with average ranks on tied scores,
    which equals the trapezoid area exactly. Returns NaN unless both
    classes are present.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    rank_sum_pos = ranks[y == 1].sum()
    return float((rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_per_task(scores, labels, masks) -> list[float]:
    """ROC-AUC per task over present entries; NaN for tasks lacking both
    classes (a warning is emitted)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    m = np.asarray(masks, dtype=np.float64)
    out = []
    for j in range(s.shape[1]):
        present = m[:, j] == 1.0
        value = roc_auc(s[present, j], y[present, j]) if present.any() else float("nan")
        if np.isnan(value):
            warnings.warn(
                f"task {j} lacks both classes; excluded from the mean metric",
                stacklevel=2,
            )
        out.append(value)
    return out


def mean_over_valid(values) -> float:
    arr = np.asarray(values, dtype=np.float64)
    valid = arr[~np.isnan(arr)]
    if len(valid) == 0:
        return float("nan")
    return float(valid.mean())
