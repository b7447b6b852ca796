"""
Heatmap overlays, the per-layer Grad-CAM figure and the statistics table.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Sequence

import cv2
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from ..core.errors import ShapeError
from ..core.models import GradCamResult
from .gradcam import feature_importance

logger = logging.getLogger(__name__)

STAT_ROWS = ["feature_importance", "max_activation", "mean_intensity"]


def to_uint8_gray(image: np.ndarray) -> np.ndarray:
    array = np.asarray(image, dtype=np.float64)
    if array.ndim == 3:
        array = array[..., 0]
    return np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8)


def overlay(heatmap: np.ndarray, image: np.ndarray, blend: float = 0.4) -> np.ndarray:
    """
    Jet-colored heatmap blended onto the grayscale scan; returns H x W x 3 uint8 RGB.

    ``image`` is a normalized H x W (or H x W x 1) scan in [0, 1].
    """
    gray = to_uint8_gray(image)
    heat = np.asarray(heatmap, dtype=np.float64)
    if heat.shape != gray.shape:
        raise ShapeError(f"heatmap shape {heat.shape} does not match image shape {gray.shape}")
    colored = cv2.applyColorMap(np.round(np.clip(heat, 0.0, 1.0) * 255.0).astype(np.uint8), cv2.COLORMAP_JET)
    base = cv2.cvtColor(gray, cv2.COLOR_GRAY2BGR)
    blended = cv2.addWeighted(base, 1.0 - blend, colored, blend, 0)
    return cv2.cvtColor(blended, cv2.COLOR_BGR2RGB)


def write_png(path: Path | str, rgb: np.ndarray) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(target), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)):
        raise OSError(f"Could not write image {target}")
    return target


def overlay_filename(source_id: str, class_id: int, layer_name: str) -> str:
    return f"{source_id}_class{class_id}_{layer_name}.png"


def export_overlays(
    results: Sequence[GradCamResult], image: np.ndarray, source_id: str, out_dir: Path | str, blend: float = 0.4
) -> List[Path]:
    out_dir = Path(out_dir)
    return [
        write_png(out_dir / overlay_filename(source_id, r.class_id, r.layer_name), overlay(r.heatmap, image, blend))
        for r in results
    ]


def gradcam_statistics_frame(results: Dict[str, Sequence[GradCamResult]]) -> pd.DataFrame:
    """
    Rows (source_id, layer, metric), one column per class.

    ``results`` maps a source id to its Grad-CAM results across layers.
    """
    records = []
    for source_id, items in results.items():
        for r in items:
            values = {
                "feature_importance": feature_importance(r.alpha),
                "max_activation": r.max_activation,
                "mean_intensity": r.mean_intensity,
            }
            for metric in STAT_ROWS:
                records.append(
                    {"source_id": source_id, "layer": r.layer_name, "metric": metric, "class": r.class_id, "value": values[metric]}
                )
    if not records:
        return pd.DataFrame(columns=["source_id", "layer", "metric"]).set_index(["source_id", "layer", "metric"])
    frame = pd.DataFrame.from_records(records).pivot_table(
        index=["source_id", "layer", "metric"], columns="class", values="value", aggfunc="first", sort=False
    )
    frame.columns = [int(c) for c in frame.columns]
    return frame


def plot_gradcam_grid(
    image: np.ndarray, results: Sequence[GradCamResult], path: Path | str, blend: float = 0.4
) -> Path:
    """Input scan followed by the per-class overlays; one row per layer."""
    layers: Dict[str, List[GradCamResult]] = {}
    for r in results:
        layers.setdefault(r.layer_name, []).append(r)
    n_cols = 1 + max(len(items) for items in layers.values())
    fig, axes = plt.subplots(len(layers), n_cols, figsize=(2.2 * n_cols, 2.4 * len(layers)), squeeze=False)
    for row, (layer, items) in enumerate(layers.items()):
        axes[row, 0].imshow(to_uint8_gray(image), cmap="gray")
        axes[row, 0].set_title(layer, fontsize=8)
        for col, r in enumerate(items, start=1):
            axes[row, col].imshow(overlay(r.heatmap, image, blend))
            axes[row, col].set_title(f"class {r.class_id}", fontsize=8)
        for ax in axes[row]:
            ax.axis("off")
    fig.tight_layout()
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(target, dpi=100)
    plt.close(fig)
    return target
