"""APM 流水线工作流模块"""

from .nodes import (
    assess,
    evaluate,
    extract,
    load_inputs,
    predict,
    report,
    train,
    transform,
)
from .state import PipelineState

__all__ = [
    "PipelineState",
    "load_inputs",
    "transform",
    "extract",
    "assess",
    "train",
    "predict",
    "evaluate",
    "report",
]
