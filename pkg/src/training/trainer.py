"""
Mini-batch Adam training on the hybrid loss with epoch-end callbacks, plus the
batch evaluator shared with the reporting stage.
"""

from __future__ import annotations

import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from ..core.errors import ArgumentError, TrainingIOError
from ..core.models import DatasetSplit, EpochLog, LossConfig, MetricsReport, PreprocessedSample, TrainingConfig
from ..nets.segnet import TracedModule, decode_probabilities, forward, save_checkpoint
from ..objectives.losses import hybrid_loss
from ..objectives.metrics import confusion_matrix, metrics_from_confusion
from .callbacks import CSVLogger, EarlyStopping, ModelCheckpoint, ReduceLROnPlateau, csv_log

logger = logging.getLogger(__name__)


def resolve_device(name: str) -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


def iter_batches(
    samples: Sequence[PreprocessedSample], batch_size: int, order: Optional[np.ndarray] = None
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield (images B x H x W x 1, one-hot B x H x W x C); the last partial batch is kept."""
    order = np.arange(len(samples)) if order is None else order
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start : start + batch_size]]
        images = np.stack([s.image for s in chunk]).astype(np.float32)
        if images.ndim == 3:
            images = images[..., np.newaxis]
        yield images, np.stack([s.onehot_mask for s in chunk])


def _targets(onehot: np.ndarray, like: torch.Tensor) -> torch.Tensor:
    return torch.as_tensor(onehot).to(device=like.device, dtype=like.dtype)


def evaluate_model(
    model: TracedModule,
    samples: Sequence[PreprocessedSample],
    batch_size: int = 32,
    loss_config: Optional[LossConfig] = None,
) -> MetricsReport:
    """
    Pixel-pooled metrics and sample-weighted mean hybrid loss over ``samples``
    in their given order.
    """
    if not samples:
        raise ArgumentError("Cannot evaluate an empty sample set")
    loss_config = loss_config or LossConfig()
    num_classes = samples[0].onehot_mask.shape[-1]
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    loss_sum = 0.0

    was_training = model.training
    model.eval()
    with torch.no_grad():
        for images, onehot in iter_batches(samples, batch_size):
            trace = forward(model, images)
            loss = hybrid_loss(_targets(onehot, trace.output), trace.output, loss_config)
            loss_sum += float(loss) * len(images)
            pred = decode_probabilities(trace.output.cpu().numpy())
            cm += confusion_matrix(np.argmax(onehot, axis=-1), pred, num_classes)
    model.train(was_training)
    return metrics_from_confusion(cm, max(loss_sum / len(samples), 0.0))


def _check_writable(path: Optional[Path], what: str) -> None:
    if path is None:
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise TrainingIOError(f"Cannot create directory for {what} {path}: {e}") from e
    if path.is_dir():
        raise TrainingIOError(f"{what} path {path} is a directory")
    if not os.access(path.parent, os.W_OK) or (path.exists() and not os.access(path, os.W_OK)):
        raise TrainingIOError(f"{what} path {path} is not writable")


def _train_epoch(
    model: TracedModule,
    optimizer: torch.optim.Optimizer,
    samples: Sequence[PreprocessedSample],
    order: np.ndarray,
    config: TrainingConfig,
    epoch: int,
) -> MetricsReport:
    num_classes = samples[0].onehot_mask.shape[-1]
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    loss_sum = 0.0
    model.train()
    batches = iter_batches(samples, config.batch_size, order)
    total = math.ceil(len(samples) / config.batch_size)
    for images, onehot in tqdm(batches, total=total, desc=f"epoch {epoch}", leave=False, disable=not config.progress):
        optimizer.zero_grad()
        trace = forward(model, images)
        loss = hybrid_loss(_targets(onehot, trace.output), trace.output, config.loss)
        loss.backward()
        optimizer.step()
        loss_sum += float(loss.detach()) * len(images)
        pred = decode_probabilities(trace.output.detach().cpu().numpy())
        cm += confusion_matrix(np.argmax(onehot, axis=-1), pred, num_classes)
    return metrics_from_confusion(cm, max(loss_sum / len(samples), 0.0))


def train(
    model: TracedModule, split: DatasetSplit, config: TrainingConfig
) -> Tuple[TracedModule, List[EpochLog]]:
    """
    Train ``model`` in place and return it with the per-epoch history.

    Callbacks run after each validation pass in the order reduce-LR,
    early-stop, checkpoint, log. With an empty validation split the
    training loss is monitored and validation columns are NaN. With zero
    epochs the initial weights are saved as the checkpoint.

    Raises:
        ArgumentError: empty training split.
        TrainingIOError: checkpoint or log path not writable.
    """
    if not split.train:
        raise ArgumentError("Training split is empty")
    _check_writable(config.checkpoint_path, "checkpoint")
    _check_writable(config.log_path, "log")
    if config.epochs == 0:
        # the untouched initialization is the best model seen
        if config.checkpoint_path:
            save_checkpoint(model, config.checkpoint_path)
        if config.log_path:
            csv_log([], config.log_path)
        return model, []

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    device = resolve_device(config.device)
    model.to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=(config.beta1, config.beta2))

    reduce_lr = ReduceLROnPlateau(config.reduce_lr, config.learning_rate)
    stopper = EarlyStopping(config.early_stop)
    checkpoint = ModelCheckpoint(config.checkpoint_path) if config.checkpoint_path else None
    csv_logger = CSVLogger(config.log_path) if config.log_path else None
    if csv_logger:
        csv_logger.start()

    history: List[EpochLog] = []
    for epoch in range(1, config.epochs + 1):
        lr = optimizer.param_groups[0]["lr"]
        order = rng.permutation(len(split.train))
        train_report = _train_epoch(model, optimizer, split.train, order, config, epoch)
        if split.validation:
            val = evaluate_model(model, split.validation, config.batch_size, config.loss)
            val_values = (val.loss, val.accuracy, val.dice, val.iou)
        else:
            val_values = (math.nan,) * 4
        monitored = train_report.loss if not split.validation else val_values[0]

        log = EpochLog(
            epoch=epoch,
            loss=train_report.loss,
            accuracy=train_report.accuracy,
            dice=train_report.dice,
            iou=train_report.iou,
            val_loss=val_values[0],
            val_accuracy=val_values[1],
            val_dice=val_values[2],
            val_iou=val_values[3],
            learning_rate=lr,
        )

        new_lr = reduce_lr(monitored)
        for group in optimizer.param_groups:
            group["lr"] = new_lr
        stop = stopper(monitored)
        if checkpoint:
            checkpoint(monitored, model, epoch)
        if csv_logger:
            csv_logger(log)
        history.append(log)

        logger.info(
            "epoch %d: loss=%.4f dice=%.4f val_loss=%.4f val_dice=%.4f lr=%.2e",
            epoch, log.loss, log.dice, log.val_loss, log.val_dice, lr,
        )
        if stop:
            break

    model.eval()
    return model, history


def write_manifest(path: Path | str, payload: Dict[str, Any]) -> Path:
    """Merge ``payload`` into the JSON run manifest at ``path``."""
    target = Path(path)
    manifest: Dict[str, Any] = {}
    if target.exists():
        manifest = json.loads(target.read_text())
    for key, value in payload.items():
        if isinstance(value, dict) and isinstance(manifest.get(key), dict):
            manifest[key].update(value)
        else:
            manifest[key] = value
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
        os.replace(tmp, target)
    except OSError as e:
        raise TrainingIOError(f"Could not write manifest {target}: {e}") from e
    return target
