"""Evaluation metrics: top-K accuracy, confusion matrices, run statistics."""

import math
from dataclasses import dataclass

import numpy as np


def topk_accuracy(score_rows, labels, k: int) -> float:
    """Fraction of rows whose true label ranks among the k highest scores.

    Score ties resolve toward the lower class id, matching prediction.
    """
    scores = np.asarray(score_rows, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or len(scores) != len(labels):
        raise ValueError("scores and labels disagree")
    c = scores.shape[1]
    if not 1 <= k <= c:
        raise ValueError(f"k must be in [1, {c}], got {k}")
    order = np.argsort(-scores, axis=1, kind="stable")
    hits = (order[:, :k] == labels[:, None]).any(axis=1)
    return float(hits.mean())


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    """Counts matrix: entry (i, j) is how often true class i was predicted as j."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels disagree")
    for arr, name in ((predictions, "prediction"), (labels, "label")):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} out of range [0, {n_classes})")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (labels, predictions), 1)
    return conf


def row_normalized(conf: np.ndarray) -> np.ndarray:
    """Confusion matrix rows rescaled to sum to 1 (zero rows stay zero)."""
    conf = np.asarray(conf, dtype=np.float64)
    sums = conf.sum(axis=1, keepdims=True)
    return np.divide(conf, sums, out=np.zeros_like(conf), where=sums > 0)


def stochastic_stats(accuracies):
    """Mean and sample standard deviation of repeated-run accuracies.

    With fewer than two values the deviation is undefined and reported as
    None.
    """
    values = [float(v) for v in accuracies]
    if not values:
        raise ValueError("no accuracies given")
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, None
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class MetricsReport:
    """Single-evaluation summary: top-K curve plus the confusion matrix."""

    topk: dict  # k -> accuracy
    confusion: np.ndarray

    def to_dict(self):
        return {
            "topk": {str(k): v for k, v in sorted(self.topk.items())},
            "confusion": self.confusion.tolist(),
        }
