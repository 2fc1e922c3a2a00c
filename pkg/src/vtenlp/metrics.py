"""Confusion-matrix metrics, support-weighted aggregates, ROC curves and AUC.

Sensitivity is defined as support-weighted recall (which always equals
accuracy) and specificity as support-weighted one-vs-rest true-negative
rate; both definitions extend naturally from the binary case to k classes.
A class with zero predicted (or zero negative) examples scores 0 for the
affected metric and is flagged, never NaN.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .corpus import LabelScheme
from .errors import RocUndefinedError, ValidationError

TABLE_COLUMNS = ("Accuracy", "Sensitivity", "Specificity", "Precision", "Recall", "F1")


@dataclass
class ConfusionMatrix:
    """Row = true class, column = predicted class."""

    counts: np.ndarray

    @classmethod
    def from_labels(cls, truths, predictions, num_classes: int) -> "ConfusionMatrix":
        counts = np.zeros((num_classes, num_classes), dtype=int)
        for t, p in zip(truths, predictions):
            counts[t, p] += 1
        return cls(counts=counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    accuracy: float
    sensitivity: float
    specificity: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class_auc: dict[int, float] = field(default_factory=dict)
    roc_points: dict[int, list[tuple[float, float]]] = field(default_factory=dict)
    zero_division_classes: tuple[int, ...] = ()

    def table_row(self) -> tuple[float, ...]:
        return (
            self.accuracy, self.sensitivity, self.specificity,
            self.weighted_precision, self.weighted_recall, self.weighted_f1,
        )


def _num_classes(scheme) -> int:
    if isinstance(scheme, LabelScheme):
        return scheme.num_classes
    return int(scheme)


def compute_metrics(truths, predictions, scheme) -> MetricsReport:
    """Point metrics from labels; ``scheme`` may be a LabelScheme or a class count."""
    truths = list(truths)
    predictions = list(predictions)
    if len(truths) != len(predictions):
        raise ValidationError(
            f"got {len(truths)} truths but {len(predictions)} predictions"
        )
    if not truths:
        raise ValidationError("need at least one labeled example")
    k = _num_classes(scheme)
    for label in truths + predictions:
        if not 0 <= label < k:
            raise ValidationError(f"label {label} out of range for {k} classes")

    cm = ConfusionMatrix.from_labels(truths, predictions, k)
    counts = cm.counts
    total = cm.total
    supports = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    tp = np.diag(counts)

    flagged: list[int] = []
    precision = np.zeros(k)
    recall = np.zeros(k)
    f1 = np.zeros(k)
    tnr = np.zeros(k)
    for c in range(k):
        if predicted[c] > 0:
            precision[c] = tp[c] / predicted[c]
        elif supports[c] > 0:
            flagged.append(c)
        if supports[c] > 0:
            recall[c] = tp[c] / supports[c]
        denom = precision[c] + recall[c]
        f1[c] = 2 * precision[c] * recall[c] / denom if denom > 0 else 0.0
        negatives = total - supports[c]
        if negatives > 0:
            fp = predicted[c] - tp[c]
            tnr[c] = (negatives - fp) / negatives
        else:
            flagged.append(c)

    weights = supports / total
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        sensitivity=float(weights @ recall),
        specificity=float(weights @ tnr),
        weighted_precision=float(weights @ precision),
        weighted_recall=float(weights @ recall),
        weighted_f1=float(weights @ f1),
        zero_division_classes=tuple(sorted(set(flagged))),
    )


def roc_curve(truths, scores, positive_class: int):
    """One-vs-rest ROC by threshold sweep over distinct scores, plus AUC.

    Returns (points, auc) where points runs from (0, 0) to (1, 1) with one
    step per distinct score value; AUC is the trapezoidal area.
    """
    y = np.asarray([1 if t == positive_class else 0 for t in truths])
    s = np.asarray(list(scores), dtype=float)
    if len(y) != len(s):
        raise ValidationError("truths and scores must have equal length")
    if np.any(s < 0) or np.any(s > 1):
        raise ValidationError("scores must lie in [0, 1]")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise RocUndefinedError(
            f"need both classes to sweep an ROC (positives={n_pos}, negatives={n_neg})"
        )

    order = np.argsort(-s, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s):
        threshold = s[order[i]]
        while i < len(s) and s[order[i]] == threshold:
            if y[order[i]] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / n_neg, tp / n_pos))

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return points, float(auc)


def attach_roc(report: MetricsReport, truths, probabilities, scheme) -> MetricsReport:
    """Fill per-class ROC/AUC from a probability matrix; absent classes skipped."""
    probs = np.asarray(probabilities, dtype=float)
    k = _num_classes(scheme)
    for c in range(k):
        try:
            points, auc = roc_curve(truths, probs[:, c], positive_class=c)
        except RocUndefinedError:
            continue
        report.roc_points[c] = points
        report.per_class_auc[c] = auc
    return report


def render_table(named_reports: list[tuple[str, MetricsReport]]) -> str:
    """Fixed-width comparison table, one row per method, 3-decimal values."""
    if not named_reports:
        raise ValidationError("need at least one report to render")
    name_width = max(len("Method"), max(len(name) for name, _ in named_reports))
    header = "Method".ljust(name_width) + "".join(
        f"  {col:>11}" for col in TABLE_COLUMNS
    )
    lines = [header, "-" * len(header)]
    for name, report in named_reports:
        cells = "".join(f"  {value:>11.3f}" for value in report.table_row())
        lines.append(name.ljust(name_width) + cells)
    return "\n".join(lines)


def write_metrics_csv(named_reports: list[tuple[str, MetricsReport]], path) -> None:
    """Machine-readable companion of render_table; values round-trip exactly."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("Method",) + TABLE_COLUMNS)
        for name, report in named_reports:
            writer.writerow([name] + [repr(value) for value in report.table_row()])


def read_metrics_csv(path) -> list[tuple[str, tuple[float, ...]]]:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    return [(row[0], tuple(float(v) for v in row[1:])) for row in rows[1:]]


def write_roc_csv(report: MetricsReport, path) -> None:
    """ROC points as ``class,fpr,tpr`` rows for any external plotter."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("class", "fpr", "tpr"))
        for class_id in sorted(report.roc_points):
            for fpr, tpr in report.roc_points[class_id]:
                writer.writerow([class_id, repr(fpr), repr(tpr)])


def write_auc_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("class", "auc"))
        for class_id in sorted(report.per_class_auc):
            writer.writerow([class_id, repr(report.per_class_auc[class_id])])
