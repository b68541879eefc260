"""Confusion-matrix metrics for the five ordinal delay classes.

Scores are computed in exact rational arithmetic from integer counts and
rounded to float once, so they are independent of sample order and match
hand-worked fractions exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

N_CLASSES = 5


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label arrays differ in shape: {y_true.shape} vs {y_pred.shape}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


@dataclass
class MetricsReport:
    confusion: list[list[int]]
    n: int
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    macro: dict[str, float]
    weighted: dict[str, float]
    loss: float | None = None
    zero_division: list[str] = field(default_factory=list)
    tags: dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        k = len(self.confusion)
        writer.writerow(["true\\pred"] + [str(c) for c in range(k)])
        for c, row in enumerate(self.confusion):
            writer.writerow([str(c)] + [str(v) for v in row])
        return buf.getvalue()


def _ratio(num: int, den: int, flag: str, flags: list[str]) -> Fraction:
    if den == 0:
        flags.append(flag)
        return Fraction(0)
    return Fraction(num, den)


def report_from_confusion(cm, loss: float | None = None, tags: dict | None = None) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    k = cm.shape[0]
    n = int(cm.sum())
    flags: list[str] = []
    prec, rec, f1 = [], [], []
    support = [int(s) for s in cm.sum(axis=1)]
    predicted = cm.sum(axis=0)
    for c in range(k):
        tp = int(cm[c, c])
        p = _ratio(tp, int(predicted[c]), f"precision[{c}]", flags)
        r = _ratio(tp, support[c], f"recall[{c}]", flags)
        prec.append(p)
        rec.append(r)
        f1.append(2 * p * r / (p + r) if p + r else Fraction(0))

    def macro(xs):
        return float(sum(xs, Fraction(0)) / k)

    def weighted(xs):
        if n == 0:
            return 0.0
        return float(sum((Fraction(s, n) * x for s, x in zip(support, xs)), Fraction(0)))

    return MetricsReport(
        confusion=cm.tolist(),
        n=n,
        accuracy=float(Fraction(int(np.trace(cm)), n)) if n else 0.0,
        precision=[float(x) for x in prec],
        recall=[float(x) for x in rec],
        f1=[float(x) for x in f1],
        support=support,
        macro={"precision": macro(prec), "recall": macro(rec), "f1": macro(f1)},
        weighted={"precision": weighted(prec), "recall": weighted(rec), "f1": weighted(f1)},
        loss=loss,
        zero_division=flags,
        tags=dict(tags or {}),
    )


def classification_report(y_true, y_pred, loss: float | None = None, tags: dict | None = None) -> MetricsReport:
    return report_from_confusion(confusion_matrix(y_true, y_pred), loss, tags)
