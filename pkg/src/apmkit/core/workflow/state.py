"""流水线状态类型定义"""

import operator
from typing import Annotated, Any, Dict, List, Optional, TypedDict

import numpy as np

from ...config.settings import PipelineConfig
from ..models import FeatureMatrix, LoocvResult, MultiBandImage, SiteTable, TrainedApm


class PipelineState(TypedDict, total=False):
    """APM 流水线状态；节点只返回自己写入的字段"""

    # 运行参数
    config: PipelineConfig
    write_outputs: bool

    # 输入：训练区与可选的测试区
    training_image: MultiBandImage
    training_sites: SiteTable
    training_conventional: Optional[np.ndarray]
    test_image: Optional[MultiBandImage]
    test_sites: Optional[SiteTable]
    test_conventional: Optional[np.ndarray]

    # 波段变换后的影像
    training_transformed: MultiBandImage
    test_transformed: Optional[MultiBandImage]

    # 环带特征
    training_features: FeatureMatrix
    test_features: Optional[FeatureMatrix]

    # 训练区嵌套 LOOCV 评估
    assessment: LoocvResult
    assessment_auc: Optional[float]

    # 全量模型与测试区预测
    model: TrainedApm
    test_scores: Optional[np.ndarray]
    test_decisions: Optional[np.ndarray]

    # ROC/γ 评估与报告
    evaluation: Dict[str, Any]
    report: Dict[str, Any]

    # 累积字段
    warnings: Annotated[List[str], operator.add]
    outputs: Annotated[List[str], operator.add]

    # 当前步骤
    current_step: Optional[str]
