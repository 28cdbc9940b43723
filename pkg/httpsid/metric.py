import logging
from typing import Sequence

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix

log = logging.getLogger(__name__)


def calc_accuracy(truth: Sequence[str], predicted: Sequence[str]) -> float:
    if len(truth) == 0:
        return 0.0
    return float(accuracy_score(list(truth), list(predicted)))


def confusion_counts(truth: Sequence[str], predicted: Sequence[str], labels: Sequence[str]) -> np.ndarray:
    """rows are ground truth, columns predictions, both in ``labels`` order"""
    if len(truth) == 0:
        return np.zeros((len(labels), len(labels)), dtype=np.int64)
    return confusion_matrix(list(truth), list(predicted), labels=list(labels)).astype(np.int64)


def row_normalize(counts: np.ndarray) -> np.ndarray:
    """each non-empty row sums to 1, empty rows stay zero"""
    counts = np.asarray(counts, dtype=np.float64)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def accuracy_from_counts(counts: np.ndarray) -> float:
    total = counts.sum()
    return float(np.trace(counts) / total) if total else 0.0


def per_class_recall(counts: np.ndarray) -> np.ndarray:
    return np.diag(row_normalize(counts))
