"""
Synthetic layered B-scans for tests and dataset-free smoke runs.

Each scan is a stack of gently curved horizontal bands: background above and
below, layers 1..7 in between, every layer with its own mean intensity.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Tuple

import numpy as np

from ..core.models import NUM_CLASSES
from .dataio import rasterize_boundaries

LAYER_LEVELS = np.array([20, 60, 90, 120, 150, 180, 210, 240], dtype=np.int64)


def layer_boundaries(height: int, width: int, rng: np.random.Generator, n_boundaries: int = NUM_CLASSES) -> np.ndarray:
    """B x W boundary rows (1-based), strictly increasing down each column."""
    top = height * 0.2 + rng.uniform(-2, 2)
    bottom = height * 0.85
    base = np.linspace(top, bottom, n_boundaries)
    phase = rng.uniform(0, 2 * np.pi)
    columns = np.arange(width)
    wave = (height * 0.03) * np.sin(2 * np.pi * columns / max(width, 1) + phase)
    return np.round(base[:, np.newaxis] + wave[np.newaxis, :]) + 1.0


def make_layered_scan(
    height: int = 216, width: int = 500, seed: int = 0, noise: float = 6.0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (image int64, mask int64, boundaries float64) for one synthetic scan."""
    rng = np.random.default_rng(seed)
    boundaries = layer_boundaries(height, width, rng)
    mask = rasterize_boundaries(boundaries, height)
    image = LAYER_LEVELS[mask] + rng.normal(0.0, noise, size=mask.shape)
    return np.clip(np.rint(image), 0, 255).astype(np.int64), mask, boundaries


def write_pair_fixture(root: Path, count: int, height: int = 216, width: int = 500, seed: int = 0) -> List[str]:
    """Write ``count`` paired ``<id>_img.npy`` / ``<id>_mask.npy`` files."""
    root.mkdir(parents=True, exist_ok=True)
    ids = []
    for index in range(count):
        image, mask, _ = make_layered_scan(height, width, seed=seed + index)
        source_id = f"scan_{index:03d}"
        np.save(root / f"{source_id}_img.npy", image)
        np.save(root / f"{source_id}_mask.npy", mask.astype(np.float64))
        ids.append(source_id)
    return ids


def write_container_fixture(
    path: Path, n_slices: int, height: int = 216, width: int = 500, seed: int = 0, annotated: int | None = None
) -> Path:
    """
    Write a .npz container shaped like a Duke subject file: ``images`` is
    H x W x N and ``manualLayers1`` is B x W x N with NaN on unannotated slices.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    images = np.zeros((height, width, n_slices), dtype=np.int64)
    layers = np.full((NUM_CLASSES, width, n_slices), np.nan)
    annotated = n_slices if annotated is None else annotated
    for index in range(n_slices):
        image, _, boundaries = make_layered_scan(height, width, seed=seed + index)
        images[..., index] = image
        if index < annotated:
            layers[..., index] = boundaries
    np.savez(path, images=images, manualLayers1=layers)
    return path
