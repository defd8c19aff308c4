"""
Test-set metrics: accuracy for balanced tasks, G-mean and F-measure for
imbalanced ones (class index 0 is the positive/minority class).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix

from ..errors import UsageError

POSITIVE = 0
NEGATIVE = 1


@dataclass(frozen=True)
class ConfusionCounts:
    true_positive: int
    false_negative: int
    false_positive: int
    true_negative: int

    @property
    def total(self) -> int:
        return self.true_positive + self.false_negative + self.false_positive + self.true_negative


@dataclass(frozen=True)
class MetricsRecord:
    """Metrics at one point of the acquisition curve"""

    accuracy: float
    recall: Optional[float] = None
    specificity: Optional[float] = None
    precision: Optional[float] = None
    g_mean: Optional[float] = None
    f_measure: Optional[float] = None

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def confusion_counts(y_true, y_pred) -> ConfusionCounts:
    """Binary confusion counts with class 0 positive"""
    y_true = np.asarray(y_true)
    if y_true.size == 0:
        raise UsageError("confusion counts need a nonempty test set")
    (tp, fn), (fp, tn) = confusion_matrix(y_true, y_pred, labels=[POSITIVE, NEGATIVE])
    return ConfusionCounts(int(tp), int(fn), int(fp), int(tn))


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def metrics_from_counts(counts: ConfusionCounts) -> MetricsRecord:
    """
    recall = TP/(TP+FN), specificity = TN/(TN+FP), precision = TP/(TP+FP),
    G-mean = sqrt(recall * specificity), F-measure = 2PR/(P+R).

    An undefined precision (no positive predictions) makes precision and
    F-measure 0.
    """
    if counts.total == 0:
        raise UsageError("metrics need a nonempty test set")
    recall = _ratio(counts.true_positive, counts.true_positive + counts.false_negative)
    specificity = _ratio(counts.true_negative, counts.true_negative + counts.false_positive)
    precision = _ratio(counts.true_positive, counts.true_positive + counts.false_positive)
    f_measure = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsRecord(
        accuracy=(counts.true_positive + counts.true_negative) / counts.total,
        recall=recall,
        specificity=specificity,
        precision=precision,
        g_mean=math.sqrt(recall * specificity),
        f_measure=f_measure,
    )


def classification_metrics(y_true, y_pred, imbalanced: bool) -> MetricsRecord:
    if len(y_true) == 0:
        raise UsageError("metrics need a nonempty test set")
    if imbalanced:
        return metrics_from_counts(confusion_counts(y_true, y_pred))
    return MetricsRecord(accuracy=float(accuracy_score(y_true, y_pred)))
