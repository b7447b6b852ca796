"""
Epoch-end control callbacks: learning-rate plateau reduction, early stopping,
best-checkpoint persistence and the CSV metric log.

Every control callback watches one monitored loss and counts an epoch as an
improvement only when ``value < best - min_delta``.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import pandas as pd

from ..core.errors import TrainingIOError
from ..core.models import EarlyStopConfig, EpochLog, ReduceLRConfig
from ..nets.segnet import SegmentationModel, save_checkpoint

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "epoch",
    "loss",
    "accuracy",
    "dice_coefficient",
    "iou",
    "val_loss",
    "val_accuracy",
    "val_dice_coefficient",
    "val_iou",
    "learning_rate",
]

# EpochLog field -> CSV header
_FIELD_TO_COLUMN = {
    "epoch": "epoch",
    "loss": "loss",
    "accuracy": "accuracy",
    "dice": "dice_coefficient",
    "iou": "iou",
    "val_loss": "val_loss",
    "val_accuracy": "val_accuracy",
    "val_dice": "val_dice_coefficient",
    "val_iou": "val_iou",
    "learning_rate": "learning_rate",
}


@dataclass
class MonitorState:
    """Best monitored value seen so far and epochs since it last improved."""
    best: float = math.inf
    wait: int = 0

    def update(self, value: float, min_delta: float = 0.0) -> bool:
        if value < self.best - min_delta:
            self.best = value
            self.wait = 0
            return True
        self.wait += 1
        return False


@dataclass
class ReduceLRState(MonitorState):
    learning_rate: float = 0.001


def reduce_lr_on_plateau(state: ReduceLRState, val_loss: float, config: ReduceLRConfig | None = None) -> float:
    """Halve (by ``factor``) the learning rate after ``patience`` epochs without improvement."""
    config = config or ReduceLRConfig()
    if not state.update(val_loss, config.min_delta) and state.wait >= config.patience:
        state.learning_rate = max(state.learning_rate * config.factor, config.min_lr)
        state.wait = 0
    return state.learning_rate


def early_stopping(state: MonitorState, val_loss: float, config: EarlyStopConfig | None = None) -> bool:
    """True when training should stop."""
    config = config or EarlyStopConfig()
    state.update(val_loss, config.min_delta)
    return state.wait >= config.patience


def checkpoint_best(state: MonitorState, val_loss: float, model: SegmentationModel, path: Path | str) -> bool:
    """Persist ``model`` iff ``val_loss`` strictly beats every earlier epoch."""
    if not state.update(val_loss):
        return False
    save_checkpoint(model, path, val_loss=float(val_loss))
    return True


def history_frame(history: Sequence[EpochLog]) -> pd.DataFrame:
    rows = [{_FIELD_TO_COLUMN[k]: v for k, v in log.model_dump().items()} for log in history]
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def csv_log(history: Sequence[EpochLog], path: Path | str) -> Path:
    """Write the whole history as CSV, replacing the previous file in one step."""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        history_frame(history).to_csv(tmp, index=False)
        os.replace(tmp, target)
    except OSError as e:
        raise TrainingIOError(f"Could not write training log {target}: {e}") from e
    return target


def read_history(path: Path | str) -> List[EpochLog]:
    frame = pd.read_csv(path)
    reverse = {column: field for field, column in _FIELD_TO_COLUMN.items()}
    return [
        EpochLog(**{reverse[column]: row[column] for column in CSV_COLUMNS})
        for row in frame.to_dict(orient="records")
    ]


class ReduceLROnPlateau:
    def __init__(self, config: ReduceLRConfig, learning_rate: float):
        self.config = config
        self.state = ReduceLRState(learning_rate=learning_rate)

    def __call__(self, monitored: float) -> float:
        previous = self.state.learning_rate
        lr = reduce_lr_on_plateau(self.state, monitored, self.config)
        if lr < previous:
            logger.info("Reducing learning rate %.3g -> %.3g", previous, lr)
        return lr


class EarlyStopping:
    def __init__(self, config: EarlyStopConfig):
        self.config = config
        self.state = MonitorState()
        self.stopped = False

    def __call__(self, monitored: float) -> bool:
        self.stopped = early_stopping(self.state, monitored, self.config)
        if self.stopped:
            logger.info("Early stopping: no improvement for %d epochs", self.state.wait)
        return self.stopped


class ModelCheckpoint:
    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.state = MonitorState()
        self.best_epoch: int | None = None

    def __call__(self, monitored: float, model: SegmentationModel, epoch: int) -> bool:
        saved = checkpoint_best(self.state, monitored, model, self.path)
        if saved:
            self.best_epoch = epoch
            logger.debug("Saved checkpoint for epoch %d (monitored %.6f)", epoch, monitored)
        return saved


class CSVLogger:
    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.history: List[EpochLog] = []

    def start(self) -> None:
        csv_log([], self.path)

    def __call__(self, log: EpochLog) -> None:
        self.history.append(log)
        csv_log(self.history, self.path)
