"""
Hard-mask evaluation metrics built on a pooled confusion matrix.

Rows of the confusion matrix are ground-truth classes, columns predictions.
A class absent from both masks scores 1.0 and is listed in ``absent_classes``;
means are taken over the classes that are present.
"""

from __future__ import annotations

from typing import Dict

import numpy as np

from ..core.errors import ArgumentError, ShapeError
from ..core.models import NUM_CLASSES, MetricsReport


def _check_masks(y_true: np.ndarray, y_pred: np.ndarray) -> None:
    if np.shape(y_true) != np.shape(y_pred):
        raise ShapeError(f"mask shapes differ: {np.shape(y_true)} vs {np.shape(y_pred)}")


def _check_class(class_id: int, num_classes: int) -> None:
    if not 0 <= class_id < num_classes:
        raise ArgumentError(f"class_id {class_id} outside [0, {num_classes})")


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    _check_masks(y_true, y_pred)
    truth = np.asarray(y_true, dtype=np.int64).ravel()
    pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if truth.size and (min(truth.min(), pred.min()) < 0 or max(truth.max(), pred.max()) >= num_classes):
        raise ArgumentError(f"labels must lie in [0, {num_classes})")
    return np.bincount(num_classes * truth + pred, minlength=num_classes**2).reshape(num_classes, num_classes)


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Fraction of pixels whose labels agree."""
    _check_masks(y_true, y_pred)
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def iou(y_true: np.ndarray, y_pred: np.ndarray, class_id: int, num_classes: int = NUM_CLASSES) -> float:
    _check_masks(y_true, y_pred)
    _check_class(class_id, num_classes)
    truth, pred = np.asarray(y_true) == class_id, np.asarray(y_pred) == class_id
    union = np.logical_or(truth, pred).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(truth, pred).sum() / union)


def hard_dice(y_true: np.ndarray, y_pred: np.ndarray, class_id: int, num_classes: int = NUM_CLASSES) -> float:
    _check_masks(y_true, y_pred)
    _check_class(class_id, num_classes)
    truth, pred = np.asarray(y_true) == class_id, np.asarray(y_pred) == class_id
    total = truth.sum() + pred.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(truth, pred).sum() / total)


def classwise_from_confusion(cm: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Per-class IoU, Dice and segmentation accuracy (recall) from a confusion matrix.

    A class with no ground-truth pixels gets accuracy 1.0 when it is never
    predicted either, 0.0 otherwise.
    """
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    gt_count = cm.sum(axis=1)
    pred_count = cm.sum(axis=0)
    fp = pred_count - tp
    fn = gt_count - tp
    union = tp + fp + fn
    present = union > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        iou_scores = np.where(present, tp / union, 1.0)
        dice_scores = np.where(present, 2.0 * tp / (2.0 * tp + fp + fn), 1.0)
        recall = np.where(gt_count > 0, tp / gt_count, np.where(pred_count == 0, 1.0, 0.0))
    return {"iou": iou_scores, "dice": dice_scores, "accuracy": recall, "present": present}


def classwise_report(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int = NUM_CLASSES) -> Dict[str, np.ndarray]:
    return classwise_from_confusion(confusion_matrix(y_true, y_pred, num_classes))


def metrics_from_confusion(cm: np.ndarray, loss: float = 0.0) -> MetricsReport:
    """Micro-aggregated accuracy plus present-class mean Dice and IoU."""
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise ArgumentError("confusion matrix is empty")
    scores = classwise_from_confusion(cm)
    present = scores["present"]
    return MetricsReport(
        accuracy=float(np.trace(cm) / total),
        dice=float(scores["dice"][present].mean()),
        iou=float(scores["iou"][present].mean()),
        loss=float(loss),
        per_class_iou=scores["iou"].tolist(),
        per_class_accuracy=scores["accuracy"].tolist(),
        per_class_dice=scores["dice"].tolist(),
        absent_classes=[int(c) for c in np.flatnonzero(~present)],
    )


def metrics_report(y_true: np.ndarray, y_pred: np.ndarray, loss: float = 0.0, num_classes: int = NUM_CLASSES) -> MetricsReport:
    return metrics_from_confusion(confusion_matrix(y_true, y_pred, num_classes), loss)
