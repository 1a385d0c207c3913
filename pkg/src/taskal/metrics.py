"""Evaluation metrics and the k-center coverage diagnostic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import TaskalError
from .pool import EmbeddingMatrix

METRIC_NAMES = ("rmse", "miou", "accuracy", "coverage_radius")


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    units: str = ""

    def __post_init__(self):
        if self.name not in METRIC_NAMES:
            raise TaskalError(f"unknown metric {self.name!r}")
        if not np.isfinite(self.value):
            raise TaskalError(f"metric {self.name} is not finite")
        if self.name in ("miou", "accuracy") and not 0.0 <= self.value <= 1.0:
            raise TaskalError(f"{self.name} must lie in [0, 1], got {self.value}")


def _paired(pred, gt, dtype):
    pred = np.asarray(pred, dtype=dtype).ravel()
    gt = np.asarray(gt, dtype=dtype).ravel()
    if pred.shape != gt.shape:
        raise TaskalError(f"length mismatch: {pred.size} predictions, {gt.size} targets")
    if pred.size == 0:
        raise TaskalError("empty input")
    return pred, gt


def rmse(pred, gt) -> float:
    pred, gt = _paired(pred, gt, np.float64)
    return float(np.sqrt(np.mean((pred - gt) ** 2)))


def accuracy(pred_class, gt_class) -> float:
    pred, gt = _paired(pred_class, gt_class, np.int64)
    return float(np.mean(pred == gt))


def miou(pred_mask, gt_mask, num_classes: int) -> float:
    """Mean IoU over classes present in either mask.

    Classes absent from both masks are left out of the mean rather than
    counted as 0/0.
    """
    pred = np.asarray(pred_mask)
    gt = np.asarray(gt_mask)
    if pred.shape != gt.shape:
        raise TaskalError(f"mask shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise TaskalError("empty mask")
    for m in (pred, gt):
        if m.min() < 0 or m.max() >= num_classes:
            raise TaskalError(f"class ids must lie in [0, {num_classes})")
    ious = []
    for c in range(num_classes):
        p, g = pred == c, gt == c
        union = np.count_nonzero(p | g)
        if union:
            ious.append(np.count_nonzero(p & g) / union)
    return float(np.mean(ious))


def mean_miou(pred_masks, gt_masks, num_classes: int) -> float:
    """Per-example mIoU averaged over examples."""
    pairs = list(zip(pred_masks, gt_masks))
    if not pairs:
        raise TaskalError("empty input")
    return float(np.mean([miou(p, g, num_classes) for p, g in pairs]))


def coverage_radius(Z: EmbeddingMatrix, centers: Iterable[int]) -> float:
    """Largest distance from any row of ``Z`` to its nearest center."""
    pos = Z.positions(dict.fromkeys(int(i) for i in centers))
    if len(pos) == 0:
        raise TaskalError("coverage radius needs at least one center")
    best = np.full(Z.n, np.inf)
    for c in Z.data[pos]:
        np.minimum(best, ((Z.data - c) ** 2).sum(axis=1), out=best)
    return float(np.sqrt(best.max()))
