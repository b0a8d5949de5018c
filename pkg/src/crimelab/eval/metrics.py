"""Binary classification metrics; the positive class is crime (1).

Percent-valued metrics are in [0, 100]; any 0/0 is 0.
"""
from __future__ import annotations

import numpy as np


def confusion(labels, predictions) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn)."""
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {p.shape}")
    if y.size == 0:
        raise ValueError("confusion of empty input")
    if not (np.isin(y, (0, 1)).all() and np.isin(p, (0, 1)).all()):
        raise ValueError("labels and predictions must be 0/1")
    y = y.astype(bool)
    p = p.astype(bool)
    tp = int(np.sum(y & p))
    fp = int(np.sum(~y & p))
    tn = int(np.sum(~y & ~p))
    fn = int(np.sum(y & ~p))
    return tp, fp, tn, fn


def _pct(num: float, den: float) -> float:
    return 100.0 * num / den if den else 0.0


def metrics(tp: int, fp: int, tn: int, fn: int) -> dict[str, float]:
    n = tp + fp + tn + fn
    if n <= 0:
        raise ValueError("metrics of an empty confusion matrix")
    precision = _pct(tp, tp + fp)
    recall = _pct(tp, tp + fn)
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    # F-score of the negative class, for the macro average
    npv = _pct(tn, tn + fn)
    spec = _pct(tn, tn + fp)
    f_neg = 2 * npv * spec / (npv + spec) if npv + spec else 0.0
    return {
        "accuracy": _pct(tp + tn, n),
        "precision": precision,
        "recall": recall,
        "f_score": f,
        "macro_f_score": (f + f_neg) / 2,
    }


def auc(labels, scores) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError("length mismatch")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    # average ranks over tie blocks (1-based)
    starts = np.flatnonzero(np.r_[True, s_sorted[1:] != s_sorted[:-1]])
    ends = np.r_[starts[1:], len(s)]
    block_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(block_rank, ends - starts)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
