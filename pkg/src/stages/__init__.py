"""
Pipeline stage implementations.
"""

from .base_stage import BaseStage
from .evaluate_stage import EvaluateStage
from .explain_stage import ExplainStage
from .prepare_stage import PrepareStage
from .train_stage import TrainStage

__all__ = [
    "BaseStage",
    "EvaluateStage",
    "ExplainStage",
    "PrepareStage",
    "TrainStage",
]
