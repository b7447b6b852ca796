"""
Train stage: fit the network on the cached split and keep the best checkpoint.
"""

from typing import Any, Dict
import logging

from ..core.console import console
from ..core.models import PipelineState, RunConfig, StageRole
from ..data.dataio import load_cache
from ..nets.segnet import build_model, count_parameters, write_architecture_summary
from ..training.trainer import train
from .base_stage import BaseStage

logger = logging.getLogger(__name__)


def load_split(state: PipelineState, config: RunConfig):
    """Split carried in the state, else the prepared cache."""
    if state.get("split") is not None:
        return state["split"], state.get("dataset_hash", "")
    split, meta = load_cache(config.data.cache_path)
    return split, meta["dataset_hash"]


class TrainStage(BaseStage):
    def __init__(self, config: RunConfig):
        super().__init__(StageRole.TRAIN, config)

    def _prepare_stage_input(self, state: PipelineState) -> Dict[str, Any]:
        split, data_hash = load_split(state, self.config)
        return {"split": split, "dataset_hash": data_hash}

    def _run(self, stage_input: Dict[str, Any]) -> Dict[str, Any]:
        model = build_model(self.config.model)
        summary = write_architecture_summary(model, self.config.reports_dir / "architecture.json")
        logger.info("Model has %d parameters", count_parameters(model))
        model, history = train(model, stage_input["split"], self.config.training)
        return {
            "model": model,
            "history": history,
            "dataset_hash": stage_input["dataset_hash"],
            "split": stage_input["split"],
            "artifacts": {
                "checkpoint": self.config.training.checkpoint_path,
                "training_log": self.config.training.log_path,
                "architecture": summary,
            },
        }

    def _post_process_result(self, result: Dict[str, Any], state: PipelineState) -> PipelineState:
        history = result["history"]
        if history:
            last = history[-1]
            console.print(
                f"epoch {last.epoch}: loss={last.loss:.6f} accuracy={last.accuracy:.6f} "
                f"dice_coefficient={last.dice:.6f} iou={last.iou:.6f} val_loss={last.val_loss:.6f} "
                f"val_accuracy={last.val_accuracy:.6f} val_dice_coefficient={last.val_dice:.6f} "
                f"val_iou={last.val_iou:.6f} learning_rate={last.learning_rate:.6g}"
            )
        else:
            console.print("No epochs run; parameters left at initialization")

        self._record(result["artifacts"], dataset_hash=result["dataset_hash"], epochs_run=len(history))
        artifacts = {**state.get("artifacts", {}), **{k: str(v) for k, v in result["artifacts"].items()}}
        return {
            **state,
            "model": result["model"],
            "history": history,
            "split": result["split"],
            "dataset_hash": result["dataset_hash"],
            "artifacts": artifacts,
            "next_stage": self._next_stage(state),
        }
