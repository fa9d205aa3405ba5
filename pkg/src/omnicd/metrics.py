"""Pixel-level confusion counts and the five change-detection metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DataError, ShapeError

METRIC_KEYS = ("precision", "recall", "f1", "iou", "acc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    iou: float
    acc: float

    def as_dict(self) -> dict:
        return asdict(self)


def _binary(a, name):
    a = np.asarray(a)
    if a.dtype == bool:
        return a
    values = np.unique(a)
    if not np.isin(values, (0, 1)).all():
        raise DataError(f"{name} must be binary {{0,1}}, found {values[:8].tolist()}")
    return a.astype(bool)


def confusion(pred, gt, valid=None) -> ConfusionCounts:
    """Exact counts; pixels where ``valid`` is False are ignored."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    p, g = _binary(pred, "prediction"), _binary(gt, "ground truth")
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != p.shape:
            raise ShapeError(f"valid mask {valid.shape} vs prediction {p.shape}")
        p, g = p[valid], g[valid]
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(p.size - tp - fp - fn)
    return ConfusionCounts(tp, fp, fn, tn)


def metrics(c: ConfusionCounts) -> MetricReport:
    """Precision, recall, F1, IoU and overall accuracy.

    When nothing is predicted and nothing changed (tp + fp + fn == 0) the
    four change metrics are defined as 1. A ratio whose own denominator is
    zero otherwise evaluates to 0.
    """
    if c.total <= 0:
        raise DataError("cannot compute metrics over zero pixels")
    acc = (c.tp + c.tn) / c.total
    if c.tp + c.fp + c.fn == 0:
        return MetricReport(1.0, 1.0, 1.0, 1.0, acc)
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    iou = c.tp / (c.tp + c.fp + c.fn)
    return MetricReport(precision, recall, f1, iou, acc)
