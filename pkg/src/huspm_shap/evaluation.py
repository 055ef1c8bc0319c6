"""Confusion matrices and the reported classification metrics.

Class 1 (purchase) is the positive class throughout. Any metric whose
denominator is zero is reported as 0 and named in ``degenerate``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

METRIC_NAMES = ("precision", "accuracy", "recall", "f1", "mcc")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if int(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def swapped(self) -> "ConfusionMatrix":
        """The same matrix with class 0 treated as positive."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp)


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    accuracy: float
    recall: float
    f1: float
    mcc: float
    per_class_f1: tuple[float, float]
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {"precision": self.precision, "accuracy": self.accuracy, "recall": self.recall,
                "f1": self.f1, "mcc": self.mcc, "f1_class0": self.per_class_f1[0],
                "f1_class1": self.per_class_f1[1], "degenerate": list(self.degenerate)}


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """Argmax of (p0, p1) rows; an exact 0.5 tie goes to class 1."""
    probs = np.asarray(probs, dtype=float)
    return (probs[:, 1] >= probs[:, 0]).astype(np.int64)


def confusion(predictions: Sequence[int], labels: Sequence[int]) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError(f"got {pred.size} predictions for {true.size} labels")
    if pred.size == 0:
        raise ValueError("cannot build a confusion matrix from no predictions")
    if not (np.isin(pred, (0, 1)).all() and np.isin(true, (0, 1)).all()):
        raise ValueError("predictions and labels must be 0 or 1")
    return ConfusionMatrix(
        tp=int(((pred == 1) & (true == 1)).sum()),
        fp=int(((pred == 1) & (true == 0)).sum()),
        tn=int(((pred == 0) & (true == 0)).sum()),
        fn=int(((pred == 0) & (true == 1)).sum()),
    )


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def _f1(cm: ConfusionMatrix, flags: list, suffix: str = "") -> tuple[float, float, float]:
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision" + suffix, flags)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall" + suffix, flags)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1" + suffix, flags)
    return precision, recall, f1


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    flags: list[str] = []
    precision, recall, f1 = _f1(cm, flags)
    _, _, f1_neg = _f1(cm.swapped(), [], "")
    if cm.tn + cm.fn == 0 or cm.tn + cm.fp == 0:
        flags.append("f1_class0")
    accuracy = _ratio(cm.tp + cm.tn, cm.total, "accuracy", flags)
    den = (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    mcc = _ratio(cm.tp * cm.tn - cm.fp * cm.fn, math.sqrt(den), "mcc", flags)
    return MetricsReport(precision, accuracy, recall, f1, mcc, (f1_neg, f1), tuple(flags))


def evaluate_probs(probs: np.ndarray, labels: Sequence[int]) -> MetricsReport:
    return metrics(confusion(predict_labels(probs), labels))


def metrics_csv(history: Iterable[tuple[int, MetricsReport]]) -> str:
    """One row per (iteration, metric)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "metric", "value"])
    for iteration, report in history:
        d = report.as_dict()
        for name in (*METRIC_NAMES, "f1_class0", "f1_class1"):
            w.writerow([iteration, name, repr(float(d[name]))])
    return buf.getvalue()
