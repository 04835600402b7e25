"""Binary classification metrics: accuracy, ROC AUC (rank statistic) and average precision."""
from __future__ import annotations

import math

import numpy as np


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    scores, labels = np.asarray(scores), np.asarray(labels)
    if labels.size == 0:
        return math.nan
    return float(np.mean((scores >= threshold).astype(int) == labels))


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney U / (P * N); tied pairs count one half. NaN when a class is absent."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    r = average_ranks(scores)
    u = r[labels].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Sum over distinct thresholds of ``(R_n - R_{n-1}) * P_n`` (step interpolation)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        return math.nan
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * precision))


def summarize(scores, labels) -> dict[str, float]:
    """``scores`` are fake-class probabilities; ``map`` is the average precision of the fake class."""
    return {"accuracy": accuracy(scores, labels), "auc": roc_auc(scores, labels),
            "map": average_precision(scores, labels)}
