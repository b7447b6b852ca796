"""
Dataset ingest and preprocessing for OCT B-scans.

Two on-disk layouts are understood (see DATA_FORMAT.md):
  - matrix containers (.mat / .npz) holding an image volume plus one or more
    manual annotation fields, either label volumes or layer-boundary rows;
  - directories of paired ``<id>_img.npy`` / ``<id>_mask.npy`` arrays.
"""

from __future__ import annotations

import hashlib
import io
import logging
import os
import zipfile
from pathlib import Path
from typing import Any, Dict, List, Literal, Sequence, Tuple

import cv2
import numpy as np
import scipy.io

from ..core.errors import ArgumentError, DataValidationError, DatasetNotFoundError
from ..core.models import NUM_CLASSES, DatasetSplit, PreprocessedSample, RawSample

logger = logging.getLogger(__name__)

CONTAINER_SUFFIXES = (".mat", ".npz")
IMAGE_SUFFIX = "_img.npy"
MASK_SUFFIX = "_mask.npy"
LABEL_TOLERANCE = 1e-6
# fixed member timestamp keeps cache archives byte-identical across runs
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


# --------------------------------------------------------------------------- #
# Loading
# --------------------------------------------------------------------------- #

def load_dataset(
    path: Path | str,
    fmt: Literal["auto", "container", "pairs"] = "auto",
    image_field: str = "images",
    layer_fields: Sequence[str] = ("manualLayers1", "manualLayers2"),
    num_classes: int = NUM_CLASSES,
) -> List[RawSample]:
    """
    Load every image/mask pair under ``path`` in lexicographic source_id order.

    Raises:
        DatasetNotFoundError: path missing or no samples discovered.
        DataValidationError: a pair violates the shape or label invariants.
    """
    root = Path(path)
    if not root.exists():
        raise DatasetNotFoundError(f"Dataset path not found: {root}")

    files = [root] if root.is_file() else sorted(p for p in root.iterdir() if p.is_file())
    containers = [p for p in files if p.suffix.lower() in CONTAINER_SUFFIXES]
    pairs = [p for p in files if p.name.endswith(IMAGE_SUFFIX)]

    samples: List[RawSample] = []
    if fmt in ("auto", "container"):
        for container in containers:
            samples.extend(load_duke_container(container, image_field, layer_fields, num_classes))
    if fmt in ("auto", "pairs"):
        samples.extend(_load_pairs(pairs, num_classes))

    if not samples:
        raise DatasetNotFoundError(f"No samples found under {root} (format={fmt})")

    samples.sort(key=lambda s: s.source_id)
    ids = [s.source_id for s in samples]
    if len(set(ids)) != len(ids):
        raise DataValidationError("duplicate source_id values in dataset")
    logger.info("Loaded %d samples from %s", len(samples), root)
    return samples


def _load_pairs(image_files: Sequence[Path], num_classes: int) -> List[RawSample]:
    samples = []
    for image_file in image_files:
        source_id = image_file.name[: -len(IMAGE_SUFFIX)]
        mask_file = image_file.with_name(source_id + MASK_SUFFIX)
        if not mask_file.exists():
            raise DataValidationError(f"missing mask file {mask_file.name}", source_id)
        image = np.load(image_file, allow_pickle=False)
        mask = np.load(mask_file, allow_pickle=False)
        samples.append(make_raw_sample(image, mask, source_id, num_classes))
    return samples


def read_container(path: Path) -> Dict[str, np.ndarray]:
    """Read all array fields of a .mat or .npz container."""
    if path.suffix.lower() == ".npz":
        with np.load(path, allow_pickle=False) as data:
            return {key: data[key] for key in data.files}
    try:
        raw = scipy.io.loadmat(path)
    except NotImplementedError:
        # MATLAB v7.3 files are HDF5; h5py returns them with reversed axes
        import h5py

        with h5py.File(path, "r") as h5:
            return {key: np.asarray(h5[key]).T for key in h5.keys() if isinstance(h5[key], h5py.Dataset)}
    return {key: value for key, value in raw.items() if not key.startswith("__")}


def load_duke_container(
    path: Path,
    image_field: str = "images",
    layer_fields: Sequence[str] = ("manualLayers1", "manualLayers2"),
    num_classes: int = NUM_CLASSES,
) -> List[RawSample]:
    """
    Expand one container into per-slice samples.

    ``image_field`` is H x W (single scan) or H x W x N. Each layer field is
    either a label volume of the same shape or boundary rows of shape
    B x W (x N). Slices without any annotation are skipped.
    """
    fields = read_container(path)
    if image_field not in fields:
        raise DataValidationError(f"container has no '{image_field}' field", path.stem)
    images = np.asarray(fields[image_field])
    if images.ndim == 2:
        images = images[..., np.newaxis]
    if images.ndim != 3:
        raise DataValidationError(f"'{image_field}' must be 2-D or 3-D, got shape {images.shape}", path.stem)
    height, width, n_slices = images.shape

    samples = []
    present = [name for name in layer_fields if name in fields]
    if not present:
        raise DataValidationError(f"container has none of the layer fields {list(layer_fields)}", path.stem)

    for name in present:
        layers = np.asarray(fields[name], dtype=np.float64)
        if layers.ndim == 2 and n_slices == 1:
            layers = layers[..., np.newaxis]
        for index in range(n_slices):
            source_id = f"{path.stem}_{name}_{index:03d}"
            annotation = layers[..., index]
            if np.all(np.isnan(annotation)):
                continue
            if annotation.shape == (height, width):
                mask = annotation
            elif annotation.ndim == 2 and annotation.shape[1] == width:
                mask = rasterize_boundaries(annotation, height, num_classes, source_id)
            else:
                raise DataValidationError(
                    f"field '{name}' slice shape {annotation.shape} matches neither the image "
                    f"({height}x{width}) nor a boundary array (B x {width})",
                    source_id,
                )
            samples.append(make_raw_sample(images[..., index], mask, source_id, num_classes))
    logger.debug("%s: %d annotated slices", path.name, len(samples))
    return samples


def rasterize_boundaries(
    boundaries: np.ndarray, height: int, num_classes: int = NUM_CLASSES, source_id: str | None = None
) -> np.ndarray:
    """
    Turn B x W boundary rows (1-based, MATLAB convention) into a label grid.

    Rows above the first boundary and below the last are background (0); the
    band starting at boundary i (0-based) is label i + 1. Columns with any
    missing boundary stay background.
    """
    n_boundaries, width = boundaries.shape
    if n_boundaries > num_classes:
        raise DataValidationError(f"{n_boundaries} boundaries exceed {num_classes} classes", source_id)
    rows = np.arange(1, height + 1, dtype=np.float64)[:, np.newaxis, np.newaxis]
    with np.errstate(invalid="ignore"):
        below = (rows >= boundaries[np.newaxis, :, :]).transpose(0, 2, 1)  # H x W x B
    count = below.sum(axis=-1)
    mask = np.where(count >= n_boundaries, 0, count).astype(np.int64)
    mask[:, np.isnan(boundaries).any(axis=0)] = 0
    return mask


def coerce_mask(mask: np.ndarray, source_id: str | None = None, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Round floating masks to integer labels and check they lie in [0, num_classes)."""
    values = np.asarray(mask)
    if np.issubdtype(values.dtype, np.floating):
        values = np.where(np.isnan(values), 0.0, values)
        rounded = np.rint(values)
        if np.any(np.abs(values - rounded) > LABEL_TOLERANCE):
            raise DataValidationError("mask holds non-integral labels", source_id)
        values = rounded
    values = values.astype(np.int64)
    if values.size and (values.min() < 0 or values.max() >= num_classes):
        bad = sorted(set(np.unique(values[(values < 0) | (values >= num_classes)]).tolist()))
        raise DataValidationError(f"mask labels {bad} outside [0, {num_classes - 1}]", source_id)
    return values


def make_raw_sample(image: np.ndarray, mask: np.ndarray, source_id: str, num_classes: int = NUM_CLASSES) -> RawSample:
    """Validate an image/mask pair and wrap it as a RawSample."""
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise DataValidationError(f"image must be a non-empty 2-D grid, got shape {image.shape}", source_id)
    if np.asarray(mask).shape != image.shape:
        raise DataValidationError(
            f"image shape {image.shape} and mask shape {np.asarray(mask).shape} differ", source_id
        )
    return RawSample(image=image, mask=coerce_mask(mask, source_id, num_classes), source_id=source_id)


# --------------------------------------------------------------------------- #
# Preprocessing
# --------------------------------------------------------------------------- #

def normalize_image(image: np.ndarray) -> np.ndarray:
    """Per-image min-max scaling to [0, 1]; constant images map to zeros."""
    values = np.asarray(image, dtype=np.float64)
    if values.size == 0:
        raise ArgumentError("cannot normalize an empty image")
    low, high = values.min(), values.max()
    if high == low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def resize_sample(sample: RawSample, target: Tuple[int, int] = (256, 256)) -> Tuple[np.ndarray, np.ndarray]:
    """
    Resize image bilinearly and mask with nearest neighbour to ``target`` (H, W).
    """
    height, width = target
    if height <= 0 or width <= 0:
        raise ArgumentError(f"target size must be positive, got {target}")
    image = np.asarray(sample.image, dtype=np.float64)
    mask = np.asarray(sample.mask)
    if image.shape == (height, width):
        return image.copy(), mask.copy()
    # cv2 takes (width, height)
    resized_image = cv2.resize(image, (width, height), interpolation=cv2.INTER_LINEAR)
    resized_mask = cv2.resize(mask.astype(np.uint8), (width, height), interpolation=cv2.INTER_NEAREST)
    return resized_image, resized_mask.astype(mask.dtype)


def one_hot_encode(mask: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Encode an H x W label grid as an H x W x num_classes binary grid."""
    labels = np.asarray(mask)
    invalid = np.argwhere((labels < 0) | (labels >= num_classes))
    if invalid.size:
        coord = tuple(int(v) for v in invalid[0])
        raise DataValidationError(f"label {labels[coord]} at {coord} outside [0, {num_classes})")
    return np.eye(num_classes, dtype=np.uint8)[labels.astype(np.int64)]


def preprocess_sample(
    sample: RawSample, target: Tuple[int, int] = (256, 256), num_classes: int = NUM_CLASSES
) -> PreprocessedSample:
    """Normalize, resize and one-hot encode one raw sample."""
    normalized = RawSample(image=normalize_image(sample.image), mask=sample.mask, source_id=sample.source_id)
    image, mask = resize_sample(normalized, target)
    return PreprocessedSample(
        image=np.clip(image, 0.0, 1.0).astype(np.float32),
        onehot_mask=one_hot_encode(mask, num_classes),
        source_id=sample.source_id,
    )


def split_dataset(samples: Sequence[Any], ratio: float = 0.8, seed: int = 42) -> DatasetSplit:
    """
    Seeded shuffle followed by a train/validation partition.

    The train part holds round-half-up(ratio * N) samples.
    """
    if not samples:
        raise ArgumentError("cannot split an empty sample collection")
    if not 0.0 < ratio <= 1.0:
        raise ArgumentError(f"ratio must lie in (0, 1], got {ratio}")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(np.floor(ratio * len(samples) + 0.5))
    shuffled = [samples[i] for i in order]
    return DatasetSplit(train=shuffled[:n_train], validation=shuffled[n_train:], seed=seed, ratio=ratio)


# --------------------------------------------------------------------------- #
# Summaries and cache
# --------------------------------------------------------------------------- #

def dataset_summary(samples: Sequence[RawSample], num_classes: int = NUM_CLASSES) -> Dict[str, Any]:
    """Exploratory statistics: count, resolutions, labels and class pixel fractions."""
    counts = np.zeros(num_classes, dtype=np.int64)
    for sample in samples:
        counts += np.bincount(sample.mask.ravel(), minlength=num_classes)[:num_classes]
    labels = sorted({int(v) for sample in samples for v in np.unique(sample.mask)})
    return {
        "count": len(samples),
        "resolutions": sorted({tuple(int(d) for d in s.image.shape) for s in samples}),
        "image_dtypes": sorted({str(s.image.dtype) for s in samples}),
        "labels": labels,
        "class_fractions": (counts / max(1, counts.sum())).tolist(),
    }


def dataset_hash(samples: Sequence[RawSample]) -> str:
    digest = hashlib.sha256()
    for sample in samples:
        digest.update(sample.source_id.encode("utf-8"))
        for array in (np.ascontiguousarray(sample.image), np.ascontiguousarray(sample.mask)):
            digest.update(f"{array.dtype.str}{array.shape}".encode("ascii"))
            digest.update(array.tobytes())
    return digest.hexdigest()


def _stack(samples: Sequence[PreprocessedSample], shape: Tuple[int, ...], num_classes: int):
    if samples:
        images = np.stack([s.image for s in samples]).astype(np.float32)
        masks = np.stack([s.onehot_mask for s in samples]).astype(np.uint8)
    else:
        images = np.zeros((0, *shape), dtype=np.float32)
        masks = np.zeros((0, *shape, num_classes), dtype=np.uint8)
    ids = np.array([s.source_id for s in samples], dtype=np.str_)
    return images, masks, ids


def save_cache(path: Path | str, split: DatasetSplit, data_hash: str = "", num_classes: int = NUM_CLASSES) -> Path:
    """Write the preprocessed split as a deterministic .npz archive."""
    target = Path(path)
    reference = (split.train or split.validation)[0]
    shape = reference.image.shape
    arrays: Dict[str, np.ndarray] = {}
    for name, part in (("train", split.train), ("validation", split.validation)):
        images, masks, ids = _stack(part, shape, num_classes)
        arrays[f"{name}_images"] = images
        arrays[f"{name}_masks"] = masks
        arrays[f"{name}_ids"] = ids
    arrays["seed"] = np.array(split.seed, dtype=np.int64)
    arrays["ratio"] = np.array(split.ratio, dtype=np.float64)
    arrays["dataset_hash"] = np.array(data_hash, dtype=np.str_)

    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(target.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            archive.writestr(info, buffer.getvalue())
    os.replace(tmp, target)
    logger.info("Wrote dataset cache %s (%d train / %d validation)", target, len(split.train), len(split.validation))
    return target


def load_cache(path: Path | str) -> Tuple[DatasetSplit, Dict[str, Any]]:
    """Read a cache written by save_cache. Returns the split and its metadata."""
    source = Path(path)
    if not source.exists():
        raise DatasetNotFoundError(f"Dataset cache not found: {source} (run 'prepare' first)")
    with np.load(source, allow_pickle=False) as data:
        parts = {}
        for name in ("train", "validation"):
            parts[name] = [
                PreprocessedSample(image=image, onehot_mask=mask, source_id=str(source_id))
                for image, mask, source_id in zip(
                    data[f"{name}_images"], data[f"{name}_masks"], data[f"{name}_ids"]
                )
            ]
        meta = {
            "seed": int(data["seed"]),
            "ratio": float(data["ratio"]),
            "dataset_hash": str(data["dataset_hash"]),
        }
    split = DatasetSplit(train=parts["train"], validation=parts["validation"], seed=meta["seed"], ratio=meta["ratio"])
    return split, meta
