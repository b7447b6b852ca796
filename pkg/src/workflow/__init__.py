"""
Workflow orchestration for the segmentation pipeline.
"""

from .pipeline_graph import PipelineGraph

__all__ = ["PipelineGraph"]
