"""Segmentation metrics: confusion matrix, per-class IoU/mIoU, PA/MPA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EvalResult:
    iou: np.ndarray   # (C,), NaN where the class is absent from truth and pred
    miou: float
    pa: np.ndarray    # (C,), NaN where the class is absent from truth
    mpa: float
    confusion: np.ndarray  # (C, C), rows = truth, cols = prediction


def confusion_matrix(
    pred: np.ndarray, truth: np.ndarray, num_classes: int
) -> np.ndarray:
    """Counts[t, p] over pixels; truth pixels with the ignore sentinel are skipped."""
    p = np.asarray(pred).reshape(-1).astype(np.int64)
    t = np.asarray(truth).reshape(-1).astype(np.int64)
    if p.shape != t.shape:
        raise ValueError("prediction and truth shapes differ")
    keep = t < num_classes
    p, t = p[keep], t[keep]
    if p.size and int(p.max()) >= num_classes:
        raise ValueError("prediction contains out-of-range classes")
    return np.bincount(
        t * num_classes + p, minlength=num_classes * num_classes
    ).reshape(num_classes, num_classes)


def evaluate(pred: np.ndarray, truth: np.ndarray, num_classes: int) -> EvalResult:
    """Per-class IoU and pixel accuracy with means over classes present in truth.

    IoU_c = diag / (row + col - diag); PA_c = diag / row. Classes absent from
    both truth and prediction get NaN entries and never enter a mean; PA is
    undefined (NaN) for classes absent from truth.
    """
    cm = confusion_matrix(pred, truth, num_classes).astype(np.float64)
    diag = np.diag(cm)
    row = cm.sum(axis=1)
    col = cm.sum(axis=0)
    union = row + col - diag
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, diag / union, np.nan)
        pa = np.where(row > 0, diag / row, np.nan)
    in_truth = row > 0
    if not in_truth.any():
        raise ValueError("no classes present in truth")
    return EvalResult(
        iou=iou,
        miou=float(iou[in_truth].mean()),
        pa=pa,
        mpa=float(pa[in_truth].mean()),
        confusion=cm.astype(np.int64),
    )
