"""Classification metrics: rank-based AUC (one-vs-rest macro), accuracy, macro F1."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


def _midranks(x: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean rank of their group."""
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_binary(scores: np.ndarray, positives: np.ndarray) -> float:
    """Mann-Whitney AUC of scores for a boolean positive mask, midrank ties."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs at least one positive and one negative")
    ranks = _midranks(scores)
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_macro_ovr(scores: np.ndarray, labels: np.ndarray) -> float:
    """One-vs-rest AUC per class column, macro-averaged over classes present.

    Classes absent from ``labels`` are skipped with a warning.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2:
        raise ValueError(f"scores must be (n, C), got shape {scores.shape}")
    present = np.unique(labels)
    if present.size < 2:
        raise ValueError("auc_macro_ovr needs at least two classes present")
    per_class = []
    for c in range(scores.shape[1]):
        if c not in present:
            warnings.warn(f"class {c} absent from labels; excluded from macro AUC")
            continue
        per_class.append(auc_binary(scores[:, c], labels == c))
    return float(np.mean(per_class))


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.size == 0:
        raise ValueError("accuracy: empty input")
    return float((predictions == labels).mean())


def f1_macro(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Per-class F1 averaged over the classes present in ``labels``."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    scores = []
    for c in np.unique(labels):
        tp = int(((predictions == c) & (labels == c)).sum())
        fp = int(((predictions == c) & (labels != c)).sum())
        fn = int(((predictions != c) & (labels == c)).sum())
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


@dataclass
class MetricsRow:
    auc: float
    acc: float
    f1: float

    def as_dict(self) -> dict:
        return {"auc": self.auc, "acc": self.acc, "f1": self.f1}


@dataclass
class MetricsReport:
    """Per-held-out-domain metric rows plus their arithmetic mean."""

    rows: dict[int, MetricsRow] = field(default_factory=dict)

    @property
    def average(self) -> MetricsRow:
        if not self.rows:
            raise ValueError("empty report")
        rows = list(self.rows.values())
        return MetricsRow(
            auc=float(np.mean([r.auc for r in rows])),
            acc=float(np.mean([r.acc for r in rows])),
            f1=float(np.mean([r.f1 for r in rows])),
        )

    def as_dict(self) -> dict:
        return {
            "domains": {str(k): v.as_dict() for k, v in sorted(self.rows.items())},
            "average": self.average.as_dict(),
        }


def evaluate_scores(scores: np.ndarray, labels: np.ndarray) -> MetricsRow:
    predictions = np.asarray(scores).argmax(axis=1)
    return MetricsRow(
        auc=auc_macro_ovr(scores, labels),
        acc=accuracy(predictions, labels),
        f1=f1_macro(predictions, labels),
    )
