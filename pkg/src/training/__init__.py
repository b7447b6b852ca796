from .callbacks import (
    CSVLogger,
    EarlyStopping,
    ModelCheckpoint,
    MonitorState,
    ReduceLROnPlateau,
    ReduceLRState,
    checkpoint_best,
    csv_log,
    early_stopping,
    read_history,
    reduce_lr_on_plateau,
)
from .trainer import evaluate_model, train, write_manifest

__all__ = [
    "CSVLogger",
    "EarlyStopping",
    "ModelCheckpoint",
    "MonitorState",
    "ReduceLROnPlateau",
    "ReduceLRState",
    "checkpoint_best",
    "csv_log",
    "early_stopping",
    "evaluate_model",
    "read_history",
    "reduce_lr_on_plateau",
    "train",
    "write_manifest",
]
