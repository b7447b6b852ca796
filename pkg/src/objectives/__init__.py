"""
Hybrid CCE + Dice loss and hard-mask segmentation metrics.
"""

from .losses import cce_loss, dice_coefficient, hybrid_loss
from .metrics import (
    accuracy,
    classwise_report,
    confusion_matrix,
    hard_dice,
    iou,
    metrics_from_confusion,
    metrics_report,
)

__all__ = [
    "accuracy",
    "cce_loss",
    "classwise_report",
    "confusion_matrix",
    "dice_coefficient",
    "hard_dice",
    "hybrid_loss",
    "iou",
    "metrics_from_confusion",
    "metrics_report",
]
