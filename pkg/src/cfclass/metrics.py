"""Classification metrics for counterfactual scores."""

import numpy as np
from scipy.stats import rankdata

__all__ = ["roc_auc", "accuracy", "roc_curve", "cross_entropy"]


def _check(scores, labels):
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size != labels.size:
        raise ValueError(f"length mismatch: {scores.size} scores, {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")
    return scores, labels.astype(int)


def roc_auc(scores, labels):
    """Area under the ROC curve via the Mann-Whitney statistic.

    Tied positive/negative pairs count one half.
    """
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined when labels contain a single class")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(scores, labels, threshold=0.5):
    """Fraction of rows where ``score >= threshold`` agrees with the label."""
    scores, labels = _check(scores, labels)
    if scores.size == 0:
        raise ValueError("empty input")
    return float(np.mean((scores >= threshold).astype(int) == labels))


def roc_curve(scores, labels):
    """ROC points ``(threshold, fpr, tpr)`` for every distinct score.

    The first point is ``(inf, 0, 0)``; rows are nondecreasing in both rates.
    """
    scores, labels = _check(scores, labels)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    order = np.argsort(-scores, kind="mergesort")
    s, lab = scores[order], labels[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), s.size - 1] if s.size else np.array([], int)
    tp = np.cumsum(lab)[distinct]
    fp = (distinct + 1) - tp
    thresholds = np.r_[np.inf, s[distinct]]
    tpr = np.r_[0.0, tp / n_pos] if n_pos else np.zeros(thresholds.size)
    fpr = np.r_[0.0, fp / n_neg] if n_neg else np.zeros(thresholds.size)
    return thresholds, fpr, tpr


def cross_entropy(scores, labels, eps=1e-12):
    scores, labels = _check(scores, labels)
    p = np.clip(scores, eps, 1.0 - eps)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log1p(-p)))
