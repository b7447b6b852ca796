from .evalreport import (
    class_colors,
    compose_comparison,
    curve_series,
    evaluate,
    failure_modes,
    misclassification_map,
    plot_classwise,
    plot_training_curves,
    render_comparison,
    write_error_map,
    write_metrics,
)
from .preview import render_dataset_preview

__all__ = [
    "class_colors",
    "compose_comparison",
    "curve_series",
    "evaluate",
    "failure_modes",
    "misclassification_map",
    "plot_classwise",
    "plot_training_curves",
    "render_comparison",
    "render_dataset_preview",
    "write_error_map",
    "write_metrics",
]
