"""
Explain stage: per-class Grad-CAM overlays and heatmap statistics.
"""

from typing import Any, Dict, List
import logging

from ..core.console import console
from ..core.errors import ArgumentError, LayerNotFoundError
from ..core.models import GradCamResult, PipelineState, RunConfig, StageRole
from ..nets.segnet import load_checkpoint
from ..xai.gradcam import multi_class_gradcam
from ..xai.render import export_overlays, gradcam_statistics_frame, plot_gradcam_grid
from .base_stage import BaseStage, resolve_checkpoint
from .train_stage import load_split

logger = logging.getLogger(__name__)


class ExplainStage(BaseStage):
    def __init__(self, config: RunConfig):
        super().__init__(StageRole.EXPLAIN, config)

    def _prepare_stage_input(self, state: PipelineState) -> Dict[str, Any]:
        model, _ = load_checkpoint(resolve_checkpoint(state, self.config), expected=self.config.model)
        registered = list(model.layer_registry.keys())
        for layer in self.config.xai.layers:
            if layer not in model.layer_registry:
                raise LayerNotFoundError(layer, registered)

        split, _ = load_split(state, self.config)
        by_id = {s.source_id: s for s in split.validation + split.train}
        ids = list(state.get("source_ids") or [])
        if not ids:
            default = (split.validation or split.train)[0]
            ids = [default.source_id]
        unknown = [i for i in ids if i not in by_id]
        if unknown:
            raise ArgumentError(f"Unknown source ids: {', '.join(unknown)}")
        return {"model": model, "samples": [by_id[i] for i in ids]}

    def _run(self, stage_input: Dict[str, Any]) -> Dict[str, Any]:
        xai = self.config.xai
        out_dir = self.config.xai_dir
        results: Dict[str, List[GradCamResult]] = {}
        written = []
        for sample in stage_input["samples"]:
            per_sample: List[GradCamResult] = []
            for layer in xai.layers:
                layer_results = multi_class_gradcam(
                    stage_input["model"], sample.image, layer, xai.class_ids(), xai.score_mode
                )
                written.extend(export_overlays(layer_results, sample.image, sample.source_id, out_dir, xai.blend))
                per_sample.extend(layer_results)
            plot_gradcam_grid(sample.image, per_sample, out_dir / f"{sample.source_id}_grid.png", xai.blend)
            results[sample.source_id] = per_sample

        stats = gradcam_statistics_frame(results)
        stats_path = out_dir / "gradcam_statistics.csv"
        stats.to_csv(stats_path)
        return {"results": results, "stats": stats, "artifacts": {"xai": out_dir, "gradcam_statistics": stats_path}, "count": len(written)}

    def _post_process_result(self, result: Dict[str, Any], state: PipelineState) -> PipelineState:
        console.print(f"Wrote {result['count']} Grad-CAM overlays to {self.config.xai_dir}")
        console.print(result["stats"].round(4).to_string())
        self._record(result["artifacts"])
        artifacts = {**state.get("artifacts", {}), **{k: str(v) for k, v in result["artifacts"].items()}}
        flat = [r for items in result["results"].values() for r in items]
        return {
            **state,
            "gradcam_results": flat,
            "artifacts": artifacts,
            "next_stage": self._next_stage(state),
        }
