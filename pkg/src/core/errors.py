"""
Exception hierarchy for the segmentation toolkit.
Every error carries the CLI exit code that reports it.
"""


class OctSegError(Exception):
    """Base class for all toolkit errors."""
    exit_code: int = 1


class ConfigError(OctSegError, ValueError):
    """Invalid configuration value or combination."""
    exit_code = 1


class ArgumentError(OctSegError, ValueError):
    """Invalid argument passed to a library operation."""
    exit_code = 1


class ShapeError(OctSegError, ValueError):
    """Tensor or grid shapes do not line up."""
    exit_code = 1


class DataError(OctSegError):
    """Problem with the dataset on disk or its contents."""
    exit_code = 2


class DatasetNotFoundError(DataError, FileNotFoundError):
    """Dataset path is missing or holds no samples."""


class DataValidationError(DataError, ValueError):
    """A sample violates the image/mask invariants."""

    def __init__(self, message: str, source_id: str | None = None):
        super().__init__(f"{source_id}: {message}" if source_id else message)
        self.source_id = source_id


class TrainingIOError(OctSegError, OSError):
    """Checkpoint, log or manifest could not be written."""
    exit_code = 3


class CheckpointError(OctSegError):
    """Checkpoint missing, unreadable or built for another architecture."""
    exit_code = 4


class XaiError(OctSegError):
    """Grad-CAM request could not be served."""
    exit_code = 5


class LayerNotFoundError(XaiError, LookupError):
    """Requested layer is not in the model's layer registry."""

    def __init__(self, layer_name: str, registered: list[str]):
        super().__init__(
            f"Unknown layer '{layer_name}'. Registered layers: {', '.join(registered)}"
        )
        self.layer_name = layer_name
        self.registered = registered
