"""
Dataset loading, preprocessing and cache handling.
"""

from .dataio import (
    dataset_hash,
    dataset_summary,
    load_cache,
    load_dataset,
    normalize_image,
    one_hot_encode,
    preprocess_sample,
    resize_sample,
    save_cache,
    split_dataset,
)

__all__ = [
    "dataset_hash",
    "dataset_summary",
    "load_cache",
    "load_dataset",
    "normalize_image",
    "one_hot_encode",
    "preprocess_sample",
    "resize_sample",
    "save_cache",
    "split_dataset",
]
