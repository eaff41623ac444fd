"""Task-performance and calibration metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .binning import ReliabilityTable, reliability_table
from .core import BinningConfig, InvalidInputError, check_labels, check_probs


def ece(table: ReliabilityTable) -> float:
    """Expected calibration error averaged over classes.

    For every class the count-weighted absolute gap between empirical and
    mean predicted probability is summed over bins; the per-class sums are
    then averaged.
    """
    if table.n <= 0:
        raise InvalidInputError("ECE needs at least one sample")
    col_sums = table.counts.sum(axis=0)
    if np.any(col_sums != table.n):
        raise InvalidInputError("reliability table counts do not sum to n for every class")
    k = table.num_classes
    per_class = []
    for j in range(k):
        terms = (table.counts[:, j] / table.n) * np.abs(table.empirical[:, j] - table.mean_pred[:, j])
        per_class.append(math.fsum(terms.tolist()))
    return math.fsum(per_class) / k


def predicted_labels(preds) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    return np.argmax(check_probs(preds), axis=1)


def confusion_matrix(preds, labels) -> np.ndarray:
    """``cm[true, predicted]`` counts."""
    p = check_probs(preds)
    y = check_labels(labels, *p.shape)
    k = p.shape[1]
    yhat = np.argmax(p, axis=1)
    return np.bincount(y * k + yhat, minlength=k * k).reshape(k, k)


def accuracy(preds, labels) -> float:
    cm = confusion_matrix(preds, labels)
    return float(np.trace(cm) / cm.sum())


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    # 0/0 counts as 0
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def f1(preds, labels, mode: str = "macro") -> float:
    cm = confusion_matrix(preds, labels)
    scores = per_class_f1(cm)
    if mode == "macro":
        return float(scores.mean())
    if mode in ("positive", "positive_class"):
        if cm.shape[0] != 2:
            raise InvalidInputError("positive-class F1 needs exactly two classes")
        return float(scores[1])
    raise InvalidInputError(f"unknown F1 mode {mode!r}")


def matthews(preds, labels) -> float:
    cm = confusion_matrix(preds, labels)
    if cm.shape[0] != 2:
        raise InvalidInputError("Matthews correlation needs exactly two classes")
    tn, fp, fn, tp = (int(v) for v in cm.ravel())
    factors = [tp + fp, tp + fn, tn + fp, tn + fn]
    if 0 in factors:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(math.prod(factors))


METRICS = ("accuracy", "f1_macro", "f1_positive", "matthews")


@dataclass
class MetricReport:
    accuracy: float
    macro_f1: float
    ece: float
    positive_f1: float | None = None
    matthews: float | None = None
    per_class_f1: list[float] = field(default_factory=list)
    per_class_ece: list[float] = field(default_factory=list)

    def task_performance(self, metric: str = "accuracy") -> float:
        value = {
            "accuracy": self.accuracy,
            "f1_macro": self.macro_f1,
            "f1_positive": self.positive_f1,
            "matthews": self.matthews,
        }.get(metric)
        if value is None:
            raise InvalidInputError(f"metric {metric!r} is not available for this task")
        return value

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(preds, labels, cfg: BinningConfig = BinningConfig()) -> MetricReport:
    table = reliability_table(preds, labels, cfg)
    cm = confusion_matrix(preds, labels)
    k = cm.shape[0]
    per_class_ece = [
        math.fsum(((table.counts[:, j] / table.n)
                   * np.abs(table.empirical[:, j] - table.mean_pred[:, j])).tolist())
        for j in range(k)
    ]
    f1s = per_class_f1(cm)
    return MetricReport(
        accuracy=float(np.trace(cm) / cm.sum()),
        macro_f1=float(f1s.mean()),
        ece=ece(table),
        positive_f1=float(f1s[1]) if k == 2 else None,
        matthews=matthews(preds, labels) if k == 2 else None,
        per_class_f1=[float(v) for v in f1s],
        per_class_ece=per_class_ece,
    )
