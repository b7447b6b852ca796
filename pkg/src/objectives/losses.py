"""
Differentiable training objectives on channels-last tensors (... x C).
"""

from __future__ import annotations

import torch

from ..core.errors import ShapeError
from ..core.models import DiceReduction, LossConfig


def _check_pair(y_true: torch.Tensor, y_pred: torch.Tensor) -> None:
    if tuple(y_true.shape) != tuple(y_pred.shape):
        raise ShapeError(f"y_true shape {tuple(y_true.shape)} != y_pred shape {tuple(y_pred.shape)}")


def cce_loss(y_true: torch.Tensor, y_pred: torch.Tensor, smoothing: float = 1e-6) -> torch.Tensor:
    """Categorical cross-entropy averaged over pixels; probabilities clipped to [eps, 1]."""
    _check_pair(y_true, y_pred)
    clipped = y_pred.clamp(min=smoothing, max=1.0)
    return -(y_true.to(y_pred.dtype) * torch.log(clipped)).sum(dim=-1).mean()


def dice_coefficient(
    y_true: torch.Tensor,
    y_pred: torch.Tensor,
    smoothing: float = 1e-6,
    reduction: DiceReduction = DiceReduction.MEAN_OVER_CLASSES,
) -> torch.Tensor:
    """
    Soft Dice (2 * sum(y * p) + eps) / (sum(y) + sum(p) + eps).

    ``mean_over_classes`` pools each channel over all pixels and averages the
    per-class scores; ``global`` pools pixels and channels together.
    """
    _check_pair(y_true, y_pred)
    y_true = y_true.to(y_pred.dtype)
    if DiceReduction(reduction) == DiceReduction.GLOBAL:
        intersection = (y_true * y_pred).sum()
        total = y_true.sum() + y_pred.sum()
        return (2.0 * intersection + smoothing) / (total + smoothing)
    dims = tuple(range(y_pred.ndim - 1))
    intersection = (y_true * y_pred).sum(dim=dims)
    total = y_true.sum(dim=dims) + y_pred.sum(dim=dims)
    return ((2.0 * intersection + smoothing) / (total + smoothing)).mean()


def hybrid_loss(y_true: torch.Tensor, y_pred: torch.Tensor, config: LossConfig | None = None) -> torch.Tensor:
    """L = CCE + lambda * (1 - Dice)."""
    config = config or LossConfig()
    cce = cce_loss(y_true, y_pred, config.smoothing)
    dice = dice_coefficient(y_true, y_pred, config.smoothing, config.dice_reduction)
    return cce + config.dice_weight * (1.0 - dice)
