"""
Dataset preview: random scans beside their jet-colored label masks.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ..core.errors import ArgumentError
from ..core.models import NUM_CLASSES, RawSample


def render_dataset_preview(
    samples: Sequence[RawSample], path: Path | str, count: int = 4, seed: int = 42, num_classes: int = NUM_CLASSES
) -> Path:
    if not samples:
        raise ArgumentError("No samples to preview")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(samples), size=min(count, len(samples)), replace=False)
    fig, axes = plt.subplots(len(picks), 2, figsize=(8, 2.2 * len(picks)), squeeze=False)
    for row, index in enumerate(sorted(picks)):
        sample = samples[index]
        axes[row, 0].imshow(sample.image, cmap="gray")
        axes[row, 0].set_title(sample.source_id, fontsize=8)
        axes[row, 1].imshow(sample.mask, cmap="jet", vmin=0, vmax=num_classes - 1, interpolation="nearest")
        axes[row, 1].set_title("mask", fontsize=8)
        for ax in axes[row]:
            ax.axis("off")
    fig.tight_layout()
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(target, dpi=100)
    plt.close(fig)
    return target
