"""Evaluation metrics: classification, regression, and link ranking.

Classification expects per-class score vectors; AUC is one-vs-rest with
tied scores counted half, computed through the rank-sum identity.
Link ranking uses optimistic ranks (count of strictly larger scores).
"""
from __future__ import annotations

import numpy as np

from .errors import UndefinedMetricError, ValidationError

CLASSIFICATION_KINDS = ("node", "edge", "graph")


def _scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2:
        raise ValidationError("classification scores must be (n, classes)")
    if labels.shape != (scores.shape[0],):
        raise ValidationError("labels must align with score rows")
    if scores.shape[0] == 0:
        raise ValidationError("empty prediction set")
    return scores, labels


def accuracy(scores, labels) -> float:
    scores, labels = _scores_labels(scores, labels)
    return float(np.mean(scores.argmax(axis=1) == labels))


def macro_f1(scores, labels) -> float:
    """Unweighted mean F1 over all score columns; empty ratios count as 0."""
    scores, labels = _scores_labels(scores, labels)
    pred = scores.argmax(axis=1)
    f1s = []
    for cls in range(scores.shape[1]):
        tp = int(np.sum((pred == cls) & (labels == cls)))
        fp = int(np.sum((pred == cls) & (labels != cls)))
        fn = int(np.sum((pred != cls) & (labels == cls)))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return float(np.mean(f1s))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def binary_auc(scores, positives) -> float:
    """Rank-sum AUC; tied pairs count 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both positive and negative labels")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def macro_auc(scores, labels) -> float:
    """One-vs-rest AUC averaged over classes present on both sides.

    Classes missing positives or negatives are skipped; if every class is
    degenerate the metric is undefined.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:  # binary shorthand: positive-class scores
        scores = np.stack([-scores, scores], axis=1)
    scores, labels = _scores_labels(scores, labels)
    aucs = []
    for cls in range(scores.shape[1]):
        positives = labels == cls
        if positives.all() or not positives.any():
            continue
        aucs.append(binary_auc(scores[:, cls], positives))
    if not aucs:
        raise UndefinedMetricError("every class is degenerate; AUC undefined")
    return float(np.mean(aucs))


def _pred_target(predictions, targets):
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if predictions.shape != targets.shape or predictions.size == 0:
        raise ValidationError("regression predictions/targets must align and be non-empty")
    return predictions, targets


def mae(predictions, targets) -> float:
    """Mean absolute error, averaged per target then over targets."""
    predictions, targets = _pred_target(predictions, targets)
    return float(np.abs(predictions - targets).mean(axis=0).mean())


def mse(predictions, targets) -> float:
    predictions, targets = _pred_target(predictions, targets)
    return float(((predictions - targets) ** 2).mean(axis=0).mean())


def ranking_metrics(score_lists, positive_indices, ks=(1, 5, 10)) -> dict:
    """MRR and Hit@k over candidate lists.

    Each entry pairs a score array with the index of its true candidate;
    rank = 1 + number of strictly larger scores.
    """
    if len(score_lists) != len(positive_indices) or not score_lists:
        raise ValidationError("need one positive index per non-empty score list")
    ranks = []
    for scores, pos in zip(score_lists, positive_indices):
        scores = np.asarray(scores, dtype=np.float64)
        if not 0 <= pos < len(scores):
            raise ValidationError(f"positive index {pos} out of range")
        ranks.append(1 + int(np.sum(scores > scores[pos])))
    ranks = np.asarray(ranks, dtype=np.float64)
    out = {"mrr": float(np.mean(1.0 / ranks))}
    for k in ks:
        out[f"hit@{k}"] = float(np.mean(ranks <= k))
    return out


def compute_metrics(predictions, labels, task_kind: str) -> dict:
    """Metric map for a task kind; see module docstring for conventions."""
    if task_kind in CLASSIFICATION_KINDS:
        return {
            "accuracy": accuracy(predictions, labels),
            "macro_f1": macro_f1(predictions, labels),
            "auc": macro_auc(predictions, labels),
        }
    if task_kind == "regression":
        return {"mae": mae(predictions, labels), "mse": mse(predictions, labels)}
    if task_kind == "link":
        return ranking_metrics(predictions, labels)
    raise ValidationError(f"unknown task kind {task_kind!r}")
