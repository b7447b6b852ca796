"""
Base pipeline stage.
Provides the shared call protocol, per-stage performance tracking and error
capture for every stage of the segmentation pipeline.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional
import asyncio
import logging
import time

from ..core.errors import OctSegError
from ..core.models import PipelineState, RunConfig, StageRole
from ..training.trainer import write_manifest

logger = logging.getLogger(__name__)

STAGE_ORDER: List[str] = [role.value for role in StageRole]


class BaseStage(ABC):
    """Abstract base class for pipeline stages"""

    def __init__(self, role: StageRole, config: RunConfig):
        self.role = role
        self.config = config

        # Performance tracking
        self.metrics = {
            "calls": 0,
            "total_time": 0.0,
            "errors": 0,
            "success_rate": 1.0,
        }

    @abstractmethod
    def _prepare_stage_input(self, state: PipelineState) -> Dict[str, Any]:
        """Collect what ``_run`` needs from the state."""

    @abstractmethod
    def _run(self, stage_input: Dict[str, Any]) -> Dict[str, Any]:
        """Blocking compute; executed in a worker thread."""

    @abstractmethod
    def _post_process_result(self, result: Dict[str, Any], state: PipelineState) -> PipelineState:
        """Fold the result back into the state."""

    def _next_stage(self, state: PipelineState) -> str:
        """Next stage for a full ``run``; single commands end after their stage."""
        if state.get("command") != "run":
            return "end"
        position = STAGE_ORDER.index(self.role.value)
        return STAGE_ORDER[position + 1] if position + 1 < len(STAGE_ORDER) else "end"

    def _record(self, artifacts: Dict[str, Any], **extra: Any) -> None:
        payload = {
            "config": self.config.model_dump(mode="json"),
            "seed": self.config.seed,
            "artifacts": {k: str(v) for k, v in artifacts.items()},
            **extra,
        }
        write_manifest(self.config.manifest_path, payload)

    async def __call__(self, state: PipelineState) -> PipelineState:
        """Execute the stage with performance tracking"""
        start_time = time.time()
        self.metrics["calls"] += 1

        try:
            stage_input = self._prepare_stage_input(state)
            result = await asyncio.to_thread(self._run, stage_input)
            updated_state = self._post_process_result(result, state)
            self.metrics["total_time"] += time.time() - start_time
            return updated_state

        except Exception as e:
            self.metrics["errors"] += 1
            self.metrics["success_rate"] = (
                (self.metrics["calls"] - self.metrics["errors"]) / max(1, self.metrics["calls"])
            )
            if isinstance(e, OctSegError):
                logger.debug("%s stage failed", self.role.value, exc_info=True)
            else:
                logger.exception("Unexpected failure in %s stage", self.role.value)

            error_log = list(state.get("error_log", []))
            error_log.append(f"{self.role.value} Error: {e}")
            return {
                **state,
                "error_log": error_log,
                "status": "error",
                "exit_code": getattr(e, "exit_code", 1),
            }

    def get_metrics(self) -> Dict[str, Any]:
        """Get performance metrics for this stage"""
        avg_time = self.metrics["total_time"] / max(1, self.metrics["calls"])
        return {
            **self.metrics,
            "average_execution_time": avg_time,
            "role": self.role.value,
        }


def resolve_checkpoint(state: PipelineState, config: RunConfig) -> Optional[Any]:
    return state.get("checkpoint") or config.training.checkpoint_path
