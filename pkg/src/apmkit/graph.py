"""APM 流水线主图定义"""

import logging
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from langgraph.graph import END, StateGraph

from .config.settings import PipelineConfig
from .core.artifacts import write_csv, write_json
from .core.errors import ConfigError
from .core.models import BAND_CONFIGURATIONS
from .core.workflow.nodes import (
    assess,
    evaluate,
    extract,
    load_inputs,
    output_file,
    predict,
    report,
    train,
    transform,
)
from .core.workflow.state import PipelineState

logger = logging.getLogger(__name__)

PIPELINE_STAGES = (
    ("load_inputs", load_inputs),  # 读取或生成输入
    ("transform", transform),  # 波段差比变换
    ("extract", extract),  # 环带特征
    ("assess", assess),  # 训练区嵌套 LOOCV
    ("train", train),  # 全量模型
    ("predict", predict),  # 测试区打分
    ("evaluate", evaluate),  # ROC 与 γ 选择
    ("report", report),  # JSON 报告
)
ASSESSMENT_STAGES = PIPELINE_STAGES[:4]


def _chain(stages) -> StateGraph:
    workflow = StateGraph(PipelineState)
    for name, node in stages:
        workflow.add_node(name, node)

    workflow.set_entry_point(stages[0][0])
    for (current, _), (following, _) in zip(stages, stages[1:]):
        workflow.add_edge(current, following)
    workflow.add_edge(stages[-1][0], END)
    return workflow


def create_pipeline_graph() -> StateGraph:
    """完整流水线：load_inputs → transform → extract → assess → train → predict → evaluate → report"""
    workflow = _chain(PIPELINE_STAGES)
    logger.debug("APM 流水线工作流图创建成功")
    return workflow


def create_assessment_graph() -> StateGraph:
    """训练区评估：load_inputs → transform → extract → assess"""
    return _chain(ASSESSMENT_STAGES)


def create_apm_pipeline():
    """创建编译后的流水线实例，供 langgraph.json 与 CLI 使用"""
    compiled_graph = create_pipeline_graph().compile()
    logger.debug("APM 流水线实例创建成功")
    return compiled_graph


def run_pipeline(config: PipelineConfig, write_outputs: bool = True) -> Dict[str, Any]:
    """执行完整流水线并返回报告"""
    logger.info(
        f"流水线开始: band_configuration={config.band_configuration}, "
        f"classifier={config.classifier.kind}, seed={config.seed}"
    )
    state = create_apm_pipeline().invoke({"config": config, "write_outputs": write_outputs})
    logger.info(f"流水线完成，写出 {len(state.get('outputs', []))} 个文件")
    return state["report"]


def _assess(config: PipelineConfig, inputs: Dict[str, Any]) -> Dict[str, Any]:
    state = {"config": config, "write_outputs": False, **inputs}
    return create_assessment_graph().compile().invoke(state)


def _shared_inputs(config: PipelineConfig) -> Dict[str, Any]:
    """只读取一次训练区输入，供多次评估复用"""
    update = load_inputs({"config": config, "write_outputs": False})
    inputs = {k: v for k, v in update.items() if k.startswith("training_")}
    inputs.update(test_image=None, test_sites=None, test_conventional=None)
    return inputs


def dedupe_band_sets(set_names: Sequence[str]) -> Tuple[List[str], List[str]]:
    """保序去重，重复项记为警告"""
    unique: List[str] = []
    warnings: List[str] = []
    for name in set_names:
        if name in unique:
            message = f"波段组合 {name} 重复，已忽略"
            logger.warning(message)
            warnings.append(message)
        else:
            unique.append(name)
    return unique, warnings


def compare_band_sets(
    config: PipelineConfig,
    set_names: Optional[Sequence[str]] = None,
    write_outputs: bool = True,
) -> Dict[str, Any]:
    """对每个波段组合运行训练区评估，汇总 (组合, BDR 数, AUC, d*)"""
    names = list(config.compare_band_sets if set_names is None else set_names)
    if not names:
        raise ConfigError("compare_band_sets 需要至少一个波段组合", key="compare_band_sets")
    unknown = [n for n in names if n not in BAND_CONFIGURATIONS]
    if unknown:
        raise ConfigError(f"未知波段组合: {unknown}", key="compare_band_sets")
    names, warnings = dedupe_band_sets(names)

    inputs = _shared_inputs(config)
    rows = []
    for name in names:
        state = _assess(replace(config, band_configuration=name), inputs)
        result = state["assessment"]
        values, counts = np.unique(result.d_stars, return_counts=True)
        rows.append(
            {
                "band_set": name,
                "bdr_count": BAND_CONFIGURATIONS[name].output_band_count,
                "feature_dimension": state["training_features"].dimension,
                "auc": state["assessment_auc"],
                # 出现次数最多的 d*，并列时取较小者
                "d_star": int(values[np.argmax(counts)]),
                "outer_error": result.outer_error,
            }
        )
        logger.info(f"波段组合 {name}: AUC={state['assessment_auc']}, d*={rows[-1]['d_star']}")

    table = {"rows": rows, "warnings": warnings}
    if write_outputs:
        write_csv(output_file(config, "compare-bands.csv"), pd.DataFrame(rows))
        write_json(output_file(config, "compare-bands.json"), table)
    return table


def compare_classifiers(config: PipelineConfig, write_outputs: bool = True) -> Dict[str, Any]:
    """同一特征上比较 LDA 与 (k,l)-NN 的训练区评估结果"""
    inputs = _shared_inputs(config)
    rows = []
    for kind in ("lda", "knn"):
        state = _assess(replace(config, classifier=replace(config.classifier, kind=kind)), inputs)
        result = state["assessment"]
        inner = []
        if config.pca.strategy == "error":
            inner = [errors[d - 1] for errors, d in zip(result.cv_errors, result.d_stars)]
        rows.append(
            {
                "classifier": kind,
                "auc": state["assessment_auc"],
                "mean_d_star": float(np.mean(result.d_stars)),
                "inner_error_at_d_star": float(np.mean(inner)) if inner else None,
                "outer_error": result.outer_error,
                "rejection_rate": result.rejection_rate,
            }
        )

    table = {"rows": rows, "warnings": []}
    if write_outputs:
        write_csv(output_file(config, "compare-classifiers.csv"), pd.DataFrame(rows))
        write_json(output_file(config, "compare-classifiers.json"), table)
    return table
