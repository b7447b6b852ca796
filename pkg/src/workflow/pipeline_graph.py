"""
LangGraph-based workflow for the segmentation pipeline.
Orchestrates the flow between the Prepare, Train, Evaluate and Explain stages.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from langgraph.graph import END, START, StateGraph

from ..core.console import console, error_console
from ..core.models import PipelineState, RunConfig
from ..stages.evaluate_stage import EvaluateStage
from ..stages.explain_stage import ExplainStage
from ..stages.prepare_stage import PrepareStage
from ..stages.train_stage import TrainStage

COMMANDS = ("prepare", "train", "evaluate", "explain", "run")

Route = Literal["prepare", "train", "evaluate", "explain", "end"]


class PipelineGraph:
    """
    Main orchestration class for the segmentation workflow.
    Uses LangGraph to route the shared state between stages.
    """

    def __init__(self, config: RunConfig):
        self.config = config

        self.prepare = PrepareStage(config)
        self.train = TrainStage(config)
        self.evaluate = EvaluateStage(config)
        self.explain = ExplainStage(config)

        self.graph = self._build_graph()
        self.compiled_graph = self.graph.compile()

    def _build_graph(self) -> StateGraph:
        workflow = StateGraph(PipelineState)

        workflow.add_node("prepare", self._prepare_node)
        workflow.add_node("train", self._train_node)
        workflow.add_node("evaluate", self._evaluate_node)
        workflow.add_node("explain", self._explain_node)

        routes = {name: name for name in ("prepare", "train", "evaluate", "explain")}
        routes["end"] = END
        workflow.add_conditional_edges(START, self._route_next, routes)
        for node in ("prepare", "train", "evaluate", "explain"):
            workflow.add_conditional_edges(node, self._route_next, routes)
        return workflow

    def _banner(self, title: str) -> None:
        console.rule(title)

    async def _prepare_node(self, state: PipelineState) -> PipelineState:
        self._banner("PREPARE - dataset")
        return await self.prepare(state)

    async def _train_node(self, state: PipelineState) -> PipelineState:
        self._banner(f"TRAIN - up to {self.config.training.epochs} epochs")
        return await self.train(state)

    async def _evaluate_node(self, state: PipelineState) -> PipelineState:
        self._banner("EVALUATE - validation metrics")
        return await self.evaluate(state)

    async def _explain_node(self, state: PipelineState) -> PipelineState:
        self._banner(f"EXPLAIN - Grad-CAM on {', '.join(self.config.xai.layers)}")
        return await self.explain(state)

    def _route_next(self, state: PipelineState) -> Route:
        """Next node from ``next_stage``; any error ends the run."""
        if state.get("status") == "error":
            if state.get("error_log"):
                error_console.print(f"[red]{state['error_log'][-1]}[/red]")
            return "end"
        next_stage = state.get("next_stage")
        if next_stage in ("prepare", "train", "evaluate", "explain"):
            return next_stage
        return "end"

    def _initialize_state(
        self, command: str, checkpoint: Optional[Path] = None, source_ids: Optional[List[str]] = None
    ) -> PipelineState:
        first = "prepare" if command == "run" else command
        return {
            "config": self.config,
            "command": command,
            "checkpoint": checkpoint,
            "source_ids": list(source_ids or []),
            "artifacts": {},
            "error_log": [],
            "next_stage": first,
            "status": "active",
            "exit_code": 0,
        }

    async def run_pipeline(
        self, command: str, checkpoint: Optional[Path] = None, source_ids: Optional[List[str]] = None
    ) -> PipelineState:
        """
        Run one command (or the whole pipeline for ``run``).

        Returns:
            Final state; ``exit_code`` is 0 on success.
        """
        if command not in COMMANDS:
            raise ValueError(f"Unknown command {command!r}; expected one of {COMMANDS}")
        state = self._initialize_state(command, checkpoint, source_ids)
        final_state = await self.compiled_graph.ainvoke(state)
        if final_state.get("status") != "error":
            final_state = {**final_state, "status": "completed", "exit_code": 0}
        self._print_results(final_state)
        return final_state

    def _print_results(self, state: PipelineState) -> None:
        if state.get("status") == "error":
            return
        artifacts = state.get("artifacts", {})
        if artifacts:
            console.rule("Artifacts")
            for name, path in artifacts.items():
                console.print(f"  {name}: {path}")

    def get_stage_metrics(self) -> Dict[str, Any]:
        return {
            "prepare": self.prepare.get_metrics(),
            "train": self.train.get_metrics(),
            "evaluate": self.evaluate.get_metrics(),
            "explain": self.explain.get_metrics(),
        }
