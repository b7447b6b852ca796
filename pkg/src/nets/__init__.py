"""
Network definitions.
"""

from .segnet import (
    SegmentationModel,
    TracedModule,
    build_model,
    decode_probabilities,
    forward,
    load_checkpoint,
    predict_mask,
    save_checkpoint,
)

__all__ = [
    "SegmentationModel",
    "TracedModule",
    "build_model",
    "decode_probabilities",
    "forward",
    "load_checkpoint",
    "predict_mask",
    "save_checkpoint",
]
