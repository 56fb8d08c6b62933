"""APM Kit - 考古预测模型 (APM) 增强流水线"""

__version__ = "0.1.0"
__author__ = "APM Kit Team"

from .config.settings import PipelineConfig, config
from .core.errors import ApmKitError

# 导入图创建函数
from .graph import (
    compare_band_sets,
    compare_classifiers,
    create_apm_pipeline,
    create_assessment_graph,
    create_pipeline_graph,
    run_pipeline,
)

__all__ = [
    "config",
    "PipelineConfig",
    "ApmKitError",
    "create_pipeline_graph",
    "create_assessment_graph",
    "create_apm_pipeline",
    "run_pipeline",
    "compare_band_sets",
    "compare_classifiers",
]
