from .models import (
    NUM_CLASSES,
    ArchitectureConfig,
    DatasetSplit,
    DecoderMode,
    EpochLog,
    ForwardTrace,
    GradCamResult,
    LossConfig,
    MetricsReport,
    PreprocessedSample,
    RawSample,
    RunConfig,
    StageRole,
    TrainingConfig,
)


__all__ = [
    "NUM_CLASSES",
    "ArchitectureConfig",
    "DatasetSplit",
    "DecoderMode",
    "EpochLog",
    "ForwardTrace",
    "GradCamResult",
    "LossConfig",
    "MetricsReport",
    "PreprocessedSample",
    "RawSample",
    "RunConfig",
    "StageRole",
    "TrainingConfig",
]
