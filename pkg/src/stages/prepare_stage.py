"""
Prepare stage: load, summarize, preprocess, split and cache the dataset.
"""

from typing import Any, Dict
import logging

from rich.table import Table

from ..core.console import console
from ..core.models import PipelineState, RunConfig, StageRole
from ..data.dataio import (
    dataset_hash,
    dataset_summary,
    load_dataset,
    preprocess_sample,
    save_cache,
    split_dataset,
)
from ..reporting.preview import render_dataset_preview
from .base_stage import BaseStage

logger = logging.getLogger(__name__)


class PrepareStage(BaseStage):
    def __init__(self, config: RunConfig):
        super().__init__(StageRole.PREPARE, config)

    def _prepare_stage_input(self, state: PipelineState) -> Dict[str, Any]:
        return {"data": self.config.data, "num_classes": self.config.model.num_classes}

    def _run(self, stage_input: Dict[str, Any]) -> Dict[str, Any]:
        data = stage_input["data"]
        num_classes = stage_input["num_classes"]
        samples = load_dataset(data.path, data.format, data.image_field, data.layer_fields, num_classes)
        summary = dataset_summary(samples, num_classes)
        data_hash = dataset_hash(samples)

        preprocessed = [preprocess_sample(s, tuple(data.target_size), num_classes) for s in samples]
        split = split_dataset(preprocessed, data.split_ratio, data.seed)
        cache = save_cache(data.cache_path, split, data_hash, num_classes)
        preview = render_dataset_preview(samples, self.config.reports_dir / "dataset_preview.png", seed=data.seed)
        return {
            "summary": summary,
            "split": split,
            "dataset_hash": data_hash,
            "artifacts": {"cache": cache, "dataset_preview": preview},
        }

    def _post_process_result(self, result: Dict[str, Any], state: PipelineState) -> PipelineState:
        summary = result["summary"]
        split = result["split"]
        table = Table(title="Dataset summary")
        table.add_column("Property")
        table.add_column("Value")
        table.add_row("samples", str(summary["count"]))
        table.add_row("resolutions", ", ".join("x".join(map(str, r)) for r in summary["resolutions"]))
        table.add_row("image dtypes", ", ".join(summary["image_dtypes"]))
        table.add_row("unique mask values", str(summary["labels"]))
        table.add_row("class fractions", ", ".join(f"{f:.3f}" for f in summary["class_fractions"]))
        table.add_row("train / validation", f"{len(split.train)} / {len(split.validation)}")
        console.print(table)

        self._record(result["artifacts"], dataset_hash=result["dataset_hash"], dataset_summary=summary)
        artifacts = {**state.get("artifacts", {}), **{k: str(v) for k, v in result["artifacts"].items()}}
        return {
            **state,
            "split": split,
            "dataset_hash": result["dataset_hash"],
            "artifacts": artifacts,
            "next_stage": self._next_stage(state),
        }
