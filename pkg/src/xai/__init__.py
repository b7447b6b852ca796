"""
Grad-CAM explanations for the segmentation network.
"""

from .gradcam import (
    class_score,
    compute_alpha,
    compute_heatmap,
    feature_importance,
    mean_intensity,
    multi_class_gradcam,
    raw_heatmap,
)
from .render import export_overlays, gradcam_statistics_frame, overlay, overlay_filename, plot_gradcam_grid

__all__ = [
    "class_score",
    "compute_alpha",
    "compute_heatmap",
    "export_overlays",
    "feature_importance",
    "gradcam_statistics_frame",
    "mean_intensity",
    "multi_class_gradcam",
    "overlay",
    "overlay_filename",
    "plot_gradcam_grid",
    "raw_heatmap",
]
