"""
Quantitative reports and qualitative renders for a trained model.

Writes, under a reports directory:
    metrics.json, summary.csv, classwise.csv, failure_modes.json,
    curves/{loss,accuracy,dice,iou}.png, classwise.png,
    compare/<source_id>.png, errors/<source_id>.png
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import cv2
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy import ndimage

from ..core.errors import ArgumentError, ShapeError
from ..core.models import NUM_CLASSES, EpochLog, LossConfig, MetricsReport, PreprocessedSample
from ..nets.segnet import TracedModule
from ..objectives.metrics import confusion_matrix
from ..training.trainer import evaluate_model
from ..xai.render import to_uint8_gray, write_png

logger = logging.getLogger(__name__)

CURVE_FAMILIES = {
    "loss": ("loss", "val_loss", "Loss"),
    "accuracy": ("accuracy", "val_accuracy", "Accuracy"),
    "dice": ("dice", "val_dice", "Dice Coefficient"),
    "iou": ("iou", "val_iou", "IoU"),
}


def evaluate(
    model: TracedModule,
    samples: Sequence[PreprocessedSample],
    batch_size: int = 32,
    loss_config: Optional[LossConfig] = None,
) -> MetricsReport:
    """Pixel-pooled accuracy, Dice and IoU over ``samples``."""
    return evaluate_model(model, samples, batch_size, loss_config)


def write_metrics(report: MetricsReport, out_dir: Path | str) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out_dir / "metrics.json",
        "summary": out_dir / "summary.csv",
        "classwise": out_dir / "classwise.csv",
    }
    paths["metrics"].write_text(json.dumps(report.to_json_dict(), indent=2))
    report.summary_table().to_csv(paths["summary"], index=False)
    report.classwise_table().to_csv(paths["classwise"])
    return paths


# --------------------------------------------------------------------------- #
# Renders
# --------------------------------------------------------------------------- #

def class_colors(num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Fixed jet color per class index, uint8 RGB."""
    jet = matplotlib.colormaps["jet"]
    steps = np.arange(num_classes) / max(num_classes - 1, 1)
    return np.round(jet(steps)[:, :3] * 255.0).astype(np.uint8)


def colorize_mask(mask: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    return class_colors(num_classes)[np.asarray(mask, dtype=np.int64)]


def compose_comparison(image: np.ndarray, gt_mask: np.ndarray, pred_mask: np.ndarray) -> np.ndarray:
    """Input | ground truth | prediction, side by side as H x 3W x 3 RGB."""
    gray = to_uint8_gray(image)
    if np.shape(gt_mask) != gray.shape or np.shape(pred_mask) != gray.shape:
        raise ShapeError(
            f"image {gray.shape}, ground truth {np.shape(gt_mask)} and prediction {np.shape(pred_mask)} must match"
        )
    return np.concatenate(
        [cv2.cvtColor(gray, cv2.COLOR_GRAY2RGB), colorize_mask(gt_mask), colorize_mask(pred_mask)], axis=1
    )


def render_comparison(sample: PreprocessedSample, prediction: np.ndarray, path: Path | str) -> Path:
    return write_png(path, compose_comparison(sample.image, sample.mask, prediction))


def misclassification_map(gt_mask: np.ndarray, pred_mask: np.ndarray, num_classes: int = NUM_CLASSES) -> Tuple[np.ndarray, np.ndarray]:
    """Binary error grid and the (true -> predicted) confusion counts."""
    if np.shape(gt_mask) != np.shape(pred_mask):
        raise ShapeError(f"mask shapes differ: {np.shape(gt_mask)} vs {np.shape(pred_mask)}")
    errors = (np.asarray(gt_mask) != np.asarray(pred_mask)).astype(np.uint8)
    return errors, confusion_matrix(gt_mask, pred_mask, num_classes)


def write_error_map(errors: np.ndarray, path: Path | str) -> Path:
    grid = (np.asarray(errors, dtype=np.uint8) * 255)
    return write_png(path, cv2.cvtColor(grid, cv2.COLOR_GRAY2RGB))


def label_boundaries(mask: np.ndarray) -> np.ndarray:
    """Pixels whose 3x3 neighborhood holds more than one label."""
    mask = np.asarray(mask)
    return ndimage.maximum_filter(mask, size=3, mode="nearest") != ndimage.minimum_filter(mask, size=3, mode="nearest")


def failure_modes(gt_mask: np.ndarray, pred_mask: np.ndarray, num_classes: int = NUM_CLASSES) -> Dict[str, Any]:
    """
    Split errors into border errors (within one pixel of a ground-truth label
    boundary) and interior errors, with per-class over-segmentation (false
    positive) and under-segmentation (false negative) counts.
    """
    errors, cm = misclassification_map(gt_mask, pred_mask, num_classes)
    errors = errors.astype(bool)
    near_border = label_boundaries(gt_mask)
    tp = np.diag(cm)
    return {
        "error_pixels": int(errors.sum()),
        "border_errors": int((errors & near_border).sum()),
        "interior_errors": int((errors & ~near_border).sum()),
        "over_segmentation": (cm.sum(axis=0) - tp).astype(int).tolist(),
        "under_segmentation": (cm.sum(axis=1) - tp).astype(int).tolist(),
    }


def merge_failure_modes(per_sample: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    if not per_sample:
        return {}
    merged: Dict[str, Any] = {}
    for key in ("error_pixels", "border_errors", "interior_errors"):
        merged[key] = int(sum(item[key] for item in per_sample))
    for key in ("over_segmentation", "under_segmentation"):
        merged[key] = np.sum([item[key] for item in per_sample], axis=0).astype(int).tolist()
    return merged


# --------------------------------------------------------------------------- #
# Plots
# --------------------------------------------------------------------------- #

def curve_series(history: Sequence[EpochLog]) -> Dict[str, Dict[str, List[float]]]:
    """Per family: epochs plus train and validation values, exactly as logged."""
    series = {}
    for family, (train_key, val_key, _) in CURVE_FAMILIES.items():
        series[family] = {
            "epoch": [log.epoch for log in history],
            "train": [getattr(log, train_key) for log in history],
            "val": [getattr(log, val_key) for log in history],
        }
    return series


def plot_training_curves(history: Sequence[EpochLog], out_dir: Path | str) -> Dict[str, Path]:
    """One PNG per metric family with train and validation curves."""
    if not history:
        raise ArgumentError("Cannot plot an empty training history")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for family, data in curve_series(history).items():
        label = CURVE_FAMILIES[family][2]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(data["epoch"], data["train"], marker="o", markersize=3, label=f"Training {label}")
        ax.plot(data["epoch"], data["val"], marker="o", markersize=3, label=f"Validation {label}")
        ax.set_xlabel("Epoch")
        ax.set_ylabel(label)
        ax.set_title(f"{label} over epochs")
        ax.legend()
        fig.tight_layout()
        paths[family] = out_dir / f"{family}.png"
        fig.savefig(paths[family], dpi=100)
        plt.close(fig)
    return paths


def plot_classwise(report: MetricsReport, path: Path | str) -> Path:
    """Class-wise IoU heatmap next to the per-class segmentation accuracy bars."""
    table = report.classwise_table()
    classes = list(table.columns)
    fig, (left, right) = plt.subplots(1, 2, figsize=(12, 3.5), gridspec_kw={"width_ratios": [3, 2]})
    image = left.imshow(np.asarray([report.per_class_iou]), cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    for i, value in enumerate(report.per_class_iou):
        left.text(i, 0, f"{value:.3f}", ha="center", va="center", color="white", fontsize=8)
    left.set_xticks(range(len(classes)), classes)
    left.set_yticks([0], ["IoU Score"])
    left.set_xlabel("Segmentation Class")
    fig.colorbar(image, ax=left)
    right.bar(classes, table.loc["Segmentation Accuracy (%)"].to_numpy(), color=class_colors(len(classes)) / 255.0)
    right.set_ylim(0, 100)
    right.set_xlabel("Segmentation Class")
    right.set_ylabel("Segmentation Accuracy (%)")
    fig.tight_layout()
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(target, dpi=100)
    plt.close(fig)
    return target
