"""
Core data models for the OCT segmentation toolkit.
Configs and reports are validated pydantic models; array-carrying records
(samples, splits, traces, Grad-CAM results) are plain dataclasses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing_extensions import TypedDict

NUM_CLASSES = 8
DEFAULT_TARGET_SIZE = (256, 256)


class StageRole(str, Enum):
    """
    Enum representing the pipeline stages.
    """
    PREPARE = "prepare"
    TRAIN = "train"
    EVALUATE = "evaluate"
    EXPLAIN = "explain"


class DecoderMode(str, Enum):
    """
    Upsampling mechanism used by the decoder blocks.
    """
    TRANSPOSED_CONV_SKIP = "transposed_conv_skip"
    INDEX_UNPOOL = "index_unpool"


class DiceReduction(str, Enum):
    GLOBAL = "global"
    MEAN_OVER_CLASSES = "mean_over_classes"


class ScoreMode(str, Enum):
    """
    Definition of the class score Y^c that Grad-CAM differentiates.
    """
    PROBABILITY = "probability"
    LOGIT = "logit"


# --------------------------------------------------------------------------- #
# Configuration
# --------------------------------------------------------------------------- #

class ArchitectureConfig(BaseModel):
    """
    Declarative description of the encoder-decoder network.
    """
    model_config = ConfigDict(frozen=True)

    input_shape: Tuple[int, int, int] = Field(default=(256, 256, 1), description="Height, width, channels")
    num_classes: int = Field(default=NUM_CLASSES, ge=2)
    encoder_filters: List[int] = Field(default_factory=lambda: [64, 128, 256, 512, 512])
    decoder_mode: DecoderMode = DecoderMode.TRANSPOSED_CONV_SKIP
    kernel_size: Literal[3] = 3
    padding: Literal["same"] = "same"
    init_seed: int = Field(default=42, description="Seed for parameter initialization; set from RunConfig.seed")

    @field_validator("encoder_filters")
    @classmethod
    def _check_filters(cls, filters: List[int]) -> List[int]:
        if len(filters) != 5:
            raise ValueError(f"encoder_filters needs 5 entries (five 2x poolings), got {len(filters)}")
        if any(f <= 0 for f in filters):
            raise ValueError("encoder_filters must be positive")
        if max(filters) > 512:
            raise ValueError("encoder_filters are capped at 512")
        return filters

    @field_validator("input_shape")
    @classmethod
    def _check_input_shape(cls, shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
        height, width, channels = shape
        if channels != 1:
            raise ValueError("input must be single-channel grayscale")
        if height <= 0 or width <= 0 or height % 32 or width % 32:
            raise ValueError(f"input height/width must be positive multiples of 32, got {height}x{width}")
        return shape


class LossConfig(BaseModel):
    """
    Hybrid CCE + Dice objective settings.
    """
    dice_weight: float = Field(default=0.5, ge=0.0, description="Lambda weighting (1 - Dice)")
    smoothing: float = Field(default=1e-6, gt=0.0, description="Epsilon for Dice smoothing and log clipping")
    dice_reduction: DiceReduction = DiceReduction.MEAN_OVER_CLASSES


class ReduceLRConfig(BaseModel):
    patience: int = Field(default=5, ge=1)
    factor: float = Field(default=0.5, gt=0.0, lt=1.0)
    min_lr: float = Field(default=1e-6, ge=0.0)
    min_delta: float = Field(default=0.0, ge=0.0)


class EarlyStopConfig(BaseModel):
    patience: int = Field(default=10, ge=1)
    min_delta: float = Field(default=0.0, ge=0.0)


class TrainingConfig(BaseModel):
    """
    Optimizer, schedule and callback settings for one training run.
    """
    learning_rate: float = Field(default=0.001, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    batch_size: int = Field(default=32, ge=1)
    epochs: int = Field(default=100, ge=0)
    seed: int = Field(default=42, description="Batch-order seed; set from RunConfig.seed")
    reduce_lr: ReduceLRConfig = Field(default_factory=ReduceLRConfig)
    early_stop: EarlyStopConfig = Field(default_factory=EarlyStopConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    checkpoint_path: Optional[Path] = None
    log_path: Optional[Path] = None
    device: Literal["auto", "cpu", "cuda"] = "auto"
    progress: bool = True


class DataConfig(BaseModel):
    path: Path = Path("data/duke")
    format: Literal["auto", "container", "pairs"] = "auto"
    image_field: str = "images"
    layer_fields: List[str] = Field(default_factory=lambda: ["manualLayers1", "manualLayers2"])
    split_ratio: float = Field(default=0.8, gt=0.0, le=1.0)
    seed: int = Field(default=42, description="Split seed; set from RunConfig.seed")
    target_size: Tuple[int, int] = DEFAULT_TARGET_SIZE
    cache_path: Optional[Path] = None

    @field_validator("target_size")
    @classmethod
    def _check_target(cls, size: Tuple[int, int]) -> Tuple[int, int]:
        if min(size) <= 0:
            raise ValueError(f"target_size must be positive, got {size}")
        return size


class XaiConfig(BaseModel):
    layers: List[str] = Field(default_factory=lambda: ["conv2d_19", "conv2d_20"])
    classes: Union[Literal["all"], List[int]] = "all"
    score_mode: ScoreMode = ScoreMode.PROBABILITY
    blend: float = Field(default=0.4, ge=0.0, le=1.0)

    @field_validator("classes")
    @classmethod
    def _check_classes(cls, classes):
        if classes != "all" and any(c < 0 or c >= NUM_CLASSES for c in classes):
            raise ValueError(f"classes must lie in [0, {NUM_CLASSES})")
        return classes

    def class_ids(self) -> List[int]:
        return list(range(NUM_CLASSES)) if self.classes == "all" else list(self.classes)


class RunConfig(BaseModel):
    """
    Whole-pipeline configuration loaded from the YAML run file.
    """
    data: DataConfig = Field(default_factory=DataConfig)
    model: ArchitectureConfig = Field(default_factory=ArchitectureConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    xai: XaiConfig = Field(default_factory=XaiConfig)
    output_root: Path = Path("runs/default")
    seed: int = Field(default=42, description="Single run seed for the split, initialization and batch order")

    @model_validator(mode="before")
    @classmethod
    def _reject_section_seeds(cls, data: Any) -> Any:
        if isinstance(data, dict):
            for section, key in (("data", "seed"), ("model", "init_seed"), ("training", "seed")):
                values = data.get(section)
                if isinstance(values, dict) and key in values:
                    raise ValueError(f"{section}.{key} is derived from the top-level seed; set `seed` instead")
        return data

    @model_validator(mode="after")
    def _derive_paths(self) -> "RunConfig":
        self.data.seed = self.seed
        self.training.seed = self.seed
        if self.model.init_seed != self.seed:
            self.model = self.model.model_copy(update={"init_seed": self.seed})

        if self.data.cache_path is None:
            self.data.cache_path = self.output_root / "cache" / "dataset.npz"
        if self.training.checkpoint_path is None:
            self.training.checkpoint_path = self.output_root / "checkpoints" / "best.pt"
        if self.training.log_path is None:
            self.training.log_path = self.output_root / "logs" / "training_log.csv"
        if tuple(self.data.target_size) != tuple(self.model.input_shape[:2]):
            raise ValueError(
                f"data.target_size {tuple(self.data.target_size)} must match model.input_shape "
                f"{tuple(self.model.input_shape[:2])}"
            )
        return self

    @property
    def reports_dir(self) -> Path:
        return self.output_root / "reports"

    @property
    def xai_dir(self) -> Path:
        return self.output_root / "xai"

    @property
    def manifest_path(self) -> Path:
        return self.output_root / "manifest.json"


class EnvOverrides(BaseSettings):
    """Environment overrides, e.g. OCTSEG_DATA_DIR for CI fixtures."""
    model_config = SettingsConfigDict(env_prefix="OCTSEG_", env_file=".env", extra="ignore")

    data_dir: Optional[Path] = None


# --------------------------------------------------------------------------- #
# Records
# --------------------------------------------------------------------------- #

@dataclass
class RawSample:
    """One B-scan and its integer layer mask as stored on disk."""
    image: np.ndarray
    mask: np.ndarray
    source_id: str


@dataclass
class PreprocessedSample:
    """Normalized, resized scan with its one-hot mask (H x W x C)."""
    image: np.ndarray
    onehot_mask: np.ndarray
    source_id: str

    @property
    def mask(self) -> np.ndarray:
        return self.onehot_mask.argmax(axis=-1)


@dataclass
class DatasetSplit:
    train: List[PreprocessedSample]
    validation: List[PreprocessedSample]
    seed: int
    ratio: float


@dataclass
class ForwardTrace:
    """
    Result of one traced forward pass.

    output and logits are channels-last (B x H x W x C); features keep the
    network's native channels-first layout (B x K x h x w) so gradients can
    be taken with respect to them directly.
    """
    output: torch.Tensor
    logits: torch.Tensor
    features: Dict[str, torch.Tensor] = field(default_factory=dict)
    pooling_indices: List[torch.Tensor] = field(default_factory=list)


@dataclass
class GradCamResult:
    class_id: int
    layer_name: str
    alpha: np.ndarray
    heatmap: np.ndarray
    max_activation: float
    mean_intensity: float

    @property
    def feature_importance(self) -> float:
        """Scalar summary of the channel weights (mean over channels)."""
        return float(np.mean(self.alpha))


class EpochLog(BaseModel):
    """
    Metrics recorded after one completed epoch.
    """
    epoch: int = Field(ge=1)
    loss: float
    accuracy: float
    dice: float
    iou: float
    val_loss: float
    val_accuracy: float
    val_dice: float
    val_iou: float
    learning_rate: float


class MetricsReport(BaseModel):
    """
    Global and class-wise segmentation quality.
    """
    accuracy: float = Field(ge=0.0, le=1.0)
    dice: float = Field(ge=0.0, le=1.0)
    iou: float = Field(ge=0.0, le=1.0)
    loss: float = Field(ge=0.0)
    per_class_iou: List[float]
    per_class_accuracy: List[float]
    per_class_dice: List[float]
    absent_classes: List[int] = Field(default_factory=list, description="Classes missing from both masks")

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "Accuracy": self.accuracy,
            "Dice Coefficient": self.dice,
            "Jaccard Index (IoU)": self.iou,
            "Loss": self.loss,
            "classwise": {
                "IoU Score": self.per_class_iou,
                "Segmentation Accuracy": self.per_class_accuracy,
                "Dice Coefficient": self.per_class_dice,
            },
            "absent_classes": self.absent_classes,
        }

    def summary_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "Metric": ["Accuracy", "Dice Coefficient", "Jaccard Index (IoU)", "Loss"],
                "Value": [self.accuracy, self.dice, self.iou, self.loss],
            }
        )

    def classwise_table(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            [self.per_class_iou, [100.0 * a for a in self.per_class_accuracy]],
            index=["IoU Score", "Segmentation Accuracy (%)"],
            columns=[str(c) for c in range(len(self.per_class_iou))],
        )
        frame.index.name = "Segmentation Class"
        return frame


class PipelineState(TypedDict, total=False):
    """
    TypedDict carried between pipeline stages.
    """
    config: RunConfig
    command: str
    checkpoint: Optional[Path]
    source_ids: List[str]

    split: DatasetSplit
    dataset_hash: str
    model: Any
    history: List[EpochLog]
    report: MetricsReport
    gradcam_results: List[GradCamResult]
    artifacts: Dict[str, str]

    # Workflow Control
    next_stage: Literal["prepare", "train", "evaluate", "explain", "end"]
    status: Literal["active", "completed", "error", "preparing"]
    error_log: List[str]
    exit_code: int
