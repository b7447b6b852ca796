"""
Multi-class Grad-CAM for segmentation networks.

The class score is the sum over pixels of the class probability map (or of the
pre-softmax logits in ``logit`` mode). Channel weights are the spatial mean of
the score's gradient with respect to a captured feature map; the heatmap is
ReLU of the weighted channel sum, bilinearly resized and max-normalized.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from ..core.errors import ArgumentError, LayerNotFoundError, ShapeError
from ..core.models import ForwardTrace, GradCamResult, ScoreMode
from ..nets.segnet import TracedModule, forward

logger = logging.getLogger(__name__)


def class_score(trace: ForwardTrace, class_id: int, score_mode: ScoreMode = ScoreMode.PROBABILITY) -> torch.Tensor:
    source = trace.output if ScoreMode(score_mode) == ScoreMode.PROBABILITY else trace.logits
    num_classes = source.shape[-1]
    if not 0 <= class_id < num_classes:
        raise ArgumentError(f"class_id {class_id} outside [0, {num_classes})")
    return source[..., class_id].sum()


def compute_alpha(gradients: np.ndarray | torch.Tensor) -> np.ndarray:
    """Global average of H x W x K gradients over the spatial axes."""
    grads = gradients.detach().cpu().numpy() if isinstance(gradients, torch.Tensor) else np.asarray(gradients)
    if grads.ndim != 3:
        raise ShapeError(f"expected H x W x K gradients, got shape {grads.shape}")
    if grads.shape[0] * grads.shape[1] == 0 or grads.shape[2] == 0:
        raise ArgumentError(f"empty feature map gradients: shape {grads.shape}")
    return grads.mean(axis=(0, 1))


def raw_heatmap(features: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """ReLU(sum_k alpha_k * A_k) at feature-map resolution."""
    features = np.asarray(features)
    alpha = np.asarray(alpha)
    if features.ndim != 3 or alpha.shape != (features.shape[-1],):
        raise ShapeError(f"features {features.shape} and alpha {alpha.shape} disagree on channel count")
    return np.maximum(np.tensordot(features, alpha, axes=([2], [0])), 0.0)


def compute_heatmap(
    features: np.ndarray, alpha: np.ndarray, target_size: Optional[Tuple[int, int]] = (256, 256)
) -> np.ndarray:
    """
    Heatmap in [0, 1]; an all-zero map stays all-zero.

    ``target_size`` of None keeps the feature-map resolution.
    """
    heatmap = raw_heatmap(features, alpha)
    if target_size is not None and tuple(target_size) != heatmap.shape:
        grid = torch.from_numpy(np.ascontiguousarray(heatmap))[None, None]
        heatmap = F.interpolate(grid, size=tuple(target_size), mode="bilinear", align_corners=False)[0, 0].numpy()
        heatmap = np.maximum(heatmap, 0.0)
    peak = heatmap.max() if heatmap.size else 0.0
    if peak > 0:
        heatmap = heatmap / peak
    return heatmap


def mean_intensity(heatmap: np.ndarray) -> float:
    return float(np.mean(heatmap))


def feature_importance(alpha: np.ndarray) -> float:
    """Scalar summary of the channel weights (mean over channels)."""
    return float(np.mean(alpha))


def _as_batch(image: np.ndarray) -> np.ndarray:
    array = np.asarray(image)
    if array.ndim == 2:
        array = array[..., np.newaxis]
    if array.ndim != 3:
        raise ShapeError(f"expected an H x W or H x W x 1 image, got shape {array.shape}")
    return array[np.newaxis]


def multi_class_gradcam(
    model: TracedModule,
    image: np.ndarray,
    layer_name: str,
    classes: Optional[Sequence[int]] = None,
    score_mode: ScoreMode = ScoreMode.PROBABILITY,
    target_size: Optional[Tuple[int, int]] = None,
) -> List[GradCamResult]:
    """
    One Grad-CAM result per requested class (all classes by default), each from
    its own gradient pass over a single shared forward pass.

    ``target_size`` defaults to the input image size.
    """
    if layer_name not in model.layer_registry:
        raise LayerNotFoundError(layer_name, list(model.layer_registry.keys()))

    batch = _as_batch(image)
    size = tuple(target_size) if target_size is not None else tuple(batch.shape[1:3])

    was_training = model.training
    model.eval()
    with torch.enable_grad():
        trace = forward(model, batch, capture=[layer_name])
        activations = trace.features[layer_name]
        num_classes = trace.output.shape[-1]
        class_ids = list(range(num_classes)) if classes is None else list(classes)
        features = activations[0].detach().permute(1, 2, 0).cpu().numpy()

        results: List[GradCamResult] = []
        for position, class_id in enumerate(class_ids):
            score = class_score(trace, class_id, score_mode)
            last = position == len(class_ids) - 1
            (grads,) = torch.autograd.grad(score, activations, retain_graph=not last)
            alpha = compute_alpha(grads[0].permute(1, 2, 0))
            heatmap = compute_heatmap(features, alpha, size)
            results.append(
                GradCamResult(
                    class_id=class_id,
                    layer_name=layer_name,
                    alpha=alpha,
                    heatmap=heatmap,
                    max_activation=float(heatmap.max()),
                    mean_intensity=mean_intensity(heatmap),
                )
            )
    model.train(was_training)
    logger.debug("Grad-CAM on %s for classes %s", layer_name, class_ids)
    return results
