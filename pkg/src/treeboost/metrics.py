"""Evaluation metrics for binary detection systems.

Scores with a zero denominator are reported as an explicit undefined
marker (None) rather than 0 or an exception; the human-readable
formatter prints them as "!".  Accuracy is included but is a misleading
score on imbalanced data, which the golden test vectors demonstrate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

UNDEFINED_MARK = "!"


class MetricError(ValueError):
    """Raised for metric contract violations."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise MetricError("confusion counts must be non-negative")

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(labels: Sequence[int], predictions: Sequence[int]) -> ConfusionMatrix:
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if len(y) != len(p):
        raise MetricError("labels and predictions differ in length")
    if len(y) == 0:
        raise MetricError("empty input")
    tp = int(np.sum((y == 1) & (p == 1)))
    fp = int(np.sum((y == 0) & (p == 1)))
    tn = int(np.sum((y == 0) & (p == 0)))
    fn = int(np.sum((y == 1) & (p == 0)))
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: float, den: float) -> Optional[float]:
    return None if den == 0 else num / den


def f_beta(precision: Optional[float], recall: Optional[float], beta: float) -> Optional[float]:
    """Weighted harmonic mean of precision and recall; None if undefined."""
    if precision is None or recall is None:
        return None
    den = beta * beta * precision + recall
    if den == 0:
        return None
    return (1 + beta * beta) * precision * recall / den


@dataclass(frozen=True)
class MetricReport:
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    f_half: Optional[float]
    f2: Optional[float]
    accuracy: Optional[float]
    mcc: Optional[float]
    baseline_prc: float

    def as_row(self) -> dict[str, Optional[float]]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "f0.5": self.f_half,
            "f2": self.f2,
            "accuracy": self.accuracy,
            "mcc": self.mcc,
            "baseline_prc": self.baseline_prc,
        }

    def format_block(self) -> str:
        lines = []
        for name, value in self.as_row().items():
            shown = UNDEFINED_MARK if value is None else f"{value:.4f}"
            lines.append(f"{name:>12}: {shown}")
        return "\n".join(lines)


def report(cm: ConfusionMatrix) -> MetricReport:
    """Derive every score from a confusion matrix; zero denominators give None."""
    if cm.total == 0:
        raise MetricError("empty confusion matrix")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    accuracy = (cm.tp + cm.tn) / cm.total
    mcc_den_sq = (
        float(cm.tp + cm.fp)
        * float(cm.tp + cm.fn)
        * float(cm.tn + cm.fp)
        * float(cm.tn + cm.fn)
    )
    if mcc_den_sq == 0:
        mcc = None
    else:
        mcc = (float(cm.tp) * cm.tn - float(cm.fp) * cm.fn) / math.sqrt(mcc_den_sq)
    return MetricReport(
        precision=precision,
        recall=recall,
        f1=f_beta(precision, recall, 1.0),
        f_half=f_beta(precision, recall, 0.5),
        f2=f_beta(precision, recall, 2.0),
        accuracy=accuracy,
        mcc=mcc,
        baseline_prc=cm.positives / cm.total,
    )


def baseline_prc(labels: Sequence[int]) -> float:
    """Positive fraction P / (P + N): the floor for AUC-PR."""
    y = np.asarray(labels)
    if len(y) == 0:
        raise MetricError("empty input")
    return float(np.sum(y == 1)) / len(y)


@dataclass(frozen=True)
class PRCurve:
    """(recall, precision) pairs swept from strictest to loosest threshold."""

    recalls: np.ndarray
    precisions: np.ndarray
    thresholds: np.ndarray
    auc: float

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["recall", "precision"])
            for r, p in zip(self.recalls, self.precisions):
                writer.writerow([repr(float(r)), repr(float(p))])


def pr_curve(labels: Sequence[int], scores: Sequence[float]) -> PRCurve:
    """Precision-recall sweep with average-precision area.

    Tied scores enter a threshold step together; the area is the
    step-sum of precision times recall increments, not a trapezoid.
    """
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if len(y) != len(s):
        raise MetricError("labels and scores differ in length")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise MetricError("PR curve undefined without positive labels")

    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]

    # last index of each tied-score block
    block_end = np.flatnonzero(np.diff(s_sorted) != 0)
    block_end = np.append(block_end, len(s_sorted) - 1)

    cum_tp = np.cumsum(y_sorted)[block_end].astype(np.float64)
    n_pred = (block_end + 1).astype(np.float64)

    precisions = cum_tp / n_pred
    recalls = cum_tp / n_pos
    thresholds = s_sorted[block_end]

    recall_steps = np.diff(np.concatenate([[0.0], recalls]))
    auc = float(np.sum(recall_steps * precisions))
    return PRCurve(recalls, precisions, thresholds, auc)


def precision_at_n(labels: Sequence[int], scores: Sequence[float], n: int) -> float:
    """Precision among the n highest-scored rows; ties keep original order."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if len(y) != len(s):
        raise MetricError("labels and scores differ in length")
    if n <= 0:
        raise MetricError("n must be positive")
    if n > len(y):
        raise MetricError("n exceeds the number of rows")
    order = np.argsort(-s, kind="stable")
    top = y[order[:n]]
    return float(np.sum(top == 1)) / n


def report_to_csv(rep: MetricReport, path: str | Path) -> None:
    """One CSV row per report; undefined scores become empty cells."""
    row = rep.as_row()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(row))
        writer.writerow(["" if v is None else repr(float(v)) for v in row.values()])
