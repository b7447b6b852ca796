"""
Small exact models and samples shared by the evaluation and XAI tests.
"""

import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.core.models import PreprocessedSample
from src.data.dataio import one_hot_encode
from src.nets.segnet import TracedModule

TINY_FILTERS = [4, 4, 8, 8, 8]


class LabelLookup(nn.Module):
    """Reads the label back out of an image that stores label / 7."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        labels = torch.round(x[:, 0] * 7).long().clamp(0, 7)
        return F.one_hot(labels, 8).permute(0, 3, 1, 2).to(x.dtype)


class LookupNet(TracedModule):
    """Predicts exactly the label encoded in its input."""

    def __init__(self):
        super().__init__()
        self.anchor = nn.Parameter(torch.zeros(1, dtype=torch.float64))
        self.layers["lookup"] = LabelLookup()
        self.head_name = "lookup"

    def forward(self, x, recorder=None):
        return self.call_layer("lookup", x, recorder=recorder)


def encoded_sample(labels: np.ndarray, source_id: str) -> PreprocessedSample:
    """Sample whose image encodes its own mask, for use with LookupNet."""
    labels = np.asarray(labels, dtype=np.int64)
    return PreprocessedSample(image=labels / 7.0, onehot_mask=one_hot_encode(labels), source_id=source_id)


GOLDEN_DIGESTS = Path(__file__).parent / "golden" / "render_digests.json"


def pixel_digest(array: np.ndarray) -> str:
    """sha256 over dtype, shape and raw pixels; independent of the PNG encoder."""
    array = np.ascontiguousarray(array)
    header = f"{array.dtype.str}{array.shape}".encode()
    return hashlib.sha256(header + array.tobytes()).hexdigest()


def assert_golden_digest(name: str, array: np.ndarray) -> None:
    """
    Compare a render against its pinned digest in tests/golden/render_digests.json.

    A missing entry (or OCTSEG_UPDATE_GOLDEN=1) records the current digest and
    skips; commit the updated file to pin it.
    """
    digests = json.loads(GOLDEN_DIGESTS.read_text()) if GOLDEN_DIGESTS.exists() else {}
    actual = pixel_digest(array)
    if name not in digests or os.environ.get("OCTSEG_UPDATE_GOLDEN") == "1":
        digests[name] = actual
        GOLDEN_DIGESTS.parent.mkdir(parents=True, exist_ok=True)
        GOLDEN_DIGESTS.write_text(json.dumps(digests, indent=2, sort_keys=True) + "\n")
        pytest.skip(f"recorded golden digest for {name}")
    assert actual == digests[name], f"{name} render no longer matches its golden digest"
