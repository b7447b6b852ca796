"""
Evaluate stage: metrics, tables and qualitative renders for the best checkpoint.
"""

from typing import Any, Dict, List
import json
import logging
import time

from ..core.console import console
from ..core.models import PipelineState, RunConfig, StageRole
from ..nets.segnet import load_checkpoint, predict_mask
from ..reporting.evalreport import (
    evaluate,
    failure_modes,
    merge_failure_modes,
    misclassification_map,
    plot_classwise,
    plot_training_curves,
    render_comparison,
    write_error_map,
    write_metrics,
)
from ..training.callbacks import read_history
from .base_stage import BaseStage, resolve_checkpoint
from .train_stage import load_split

logger = logging.getLogger(__name__)


class EvaluateStage(BaseStage):
    def __init__(self, config: RunConfig):
        super().__init__(StageRole.EVALUATE, config)

    def _prepare_stage_input(self, state: PipelineState) -> Dict[str, Any]:
        model, _ = load_checkpoint(resolve_checkpoint(state, self.config), expected=self.config.model)
        split, data_hash = load_split(state, self.config)
        history = state.get("history")
        log_path = self.config.training.log_path
        if not history and log_path is not None and log_path.exists():
            history = read_history(log_path)
        return {"model": model, "split": split, "dataset_hash": data_hash, "history": history or []}

    def _run(self, stage_input: Dict[str, Any]) -> Dict[str, Any]:
        model = stage_input["model"]
        split = stage_input["split"]
        samples = split.validation
        if not samples:
            logger.warning("Validation split is empty; evaluating the training split")
            samples = split.train

        reports = self.config.reports_dir
        report = evaluate(model, samples, self.config.training.batch_size, self.config.training.loss)
        artifacts: Dict[str, Any] = write_metrics(report, reports)
        artifacts["classwise_plot"] = plot_classwise(report, reports / "classwise.png")

        failures: List[Dict[str, Any]] = []
        elapsed = 0.0
        for sample in samples:
            start = time.perf_counter()
            prediction = predict_mask(model, sample.image)
            elapsed += time.perf_counter() - start
            render_comparison(sample, prediction, reports / "compare" / f"{sample.source_id}.png")
            errors, _ = misclassification_map(sample.mask, prediction, self.config.model.num_classes)
            write_error_map(errors, reports / "errors" / f"{sample.source_id}.png")
            failures.append(failure_modes(sample.mask, prediction, self.config.model.num_classes))
        artifacts["compare"] = reports / "compare"
        artifacts["errors"] = reports / "errors"

        failure_path = reports / "failure_modes.json"
        failure_path.write_text(json.dumps(merge_failure_modes(failures), indent=2))
        artifacts["failure_modes"] = failure_path

        if stage_input["history"]:
            for family, path in plot_training_curves(stage_input["history"], reports / "curves").items():
                artifacts[f"curve_{family}"] = path

        return {
            "report": report,
            "artifacts": artifacts,
            "dataset_hash": stage_input["dataset_hash"],
            "split": split,
            "inference_seconds_per_image": elapsed / len(samples),
        }

    def _post_process_result(self, result: Dict[str, Any], state: PipelineState) -> PipelineState:
        report = result["report"]
        console.print_json(json.dumps(report.to_json_dict()))
        self._record(
            result["artifacts"],
            dataset_hash=result["dataset_hash"],
            inference_seconds_per_image=result["inference_seconds_per_image"],
        )
        artifacts = {**state.get("artifacts", {}), **{k: str(v) for k, v in result["artifacts"].items()}}
        return {
            **state,
            "report": report,
            "split": result["split"],
            "artifacts": artifacts,
            "next_stage": self._next_stage(state),
        }
