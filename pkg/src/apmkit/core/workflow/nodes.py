"""流水线节点：每个节点对应一个阶段，读取状态并返回增量更新

节点在 `write_outputs` 为真时把本阶段结果原子写入输出目录，
文件名形如 `<stage>.<ext>` 或 `<stage>.<part>.<ext>`。
"""

import functools
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ...config.settings import PipelineConfig, RegionInputs
from ..annuli import extract_features, load_radii_table, save_features
from ..artifacts import write_csv, write_json
from ..band_transform import build_band_configuration, load_ktt_coefficients
from ..errors import ConfigError, PipelineStageError, SiteTableError
from ..evaluation import (
    build_score_table,
    convex_combine,
    plot_auc_gamma,
    plot_roc,
    roc_curve,
    save_auc_gamma,
    save_roc,
    save_scores,
    select_gamma,
    tiebreak_bound,
    tiebreak_refinement_check,
    tnr_at_fnr_table,
)
from ..model import ModelOptions, nested_loocv, predict_scores, save_assessment, save_model, train_full
from ..models import (
    BAND_CONFIGURATIONS,
    CONVENTIONAL_LEVELS,
    FeatureMatrix,
    GammaSelection,
    LoocvResult,
    MultiBandImage,
    RadiiTable,
    RocCurve,
    ScoreTable,
    SiteTable,
    TrainedApm,
)
from ..raster_io import load_raster, load_sites, sample_at_sites, save_raster, save_sites
from ..synth import generate_conventional_raster, generate_labeled_dataset
from .state import PipelineState

logger = logging.getLogger(__name__)

DEFAULT_ANNULI = 30

REGIONS = ("training", "test")
# tiebreak 检查默认使用的 γ
TIEBREAK_EPSILON = 0.01


def stage(name: str) -> Callable:
    """节点装饰器：记录阶段起止，并把任何异常包装为 PipelineStageError"""

    def decorator(fn: Callable[[PipelineState], Dict[str, Any]]):
        @functools.wraps(fn)
        def wrapper(state: PipelineState) -> Dict[str, Any]:
            logger.info(f"阶段 {name} 开始")
            try:
                update = fn(state)
            except PipelineStageError:
                raise
            except Exception as e:
                logger.error(f"阶段 {name} 失败: {e}")
                raise PipelineStageError(name, e) from e
            update["current_step"] = name
            logger.info(f"阶段 {name} 完成")
            return update

        return wrapper

    return decorator


def output_file(config: PipelineConfig, name: str) -> Path:
    return config.output_path / name


def model_options(config: PipelineConfig) -> ModelOptions:
    c, p = config.classifier, config.pca
    return ModelOptions(
        shrinkage=c.shrinkage,
        priors=c.priors,
        k=c.k,
        l=c.l,
        strategy=p.strategy,
        variance_threshold=p.variance_threshold,
        standardize=p.standardize,
        outer_score=c.outer_score,
    )


# ---------------------------------------------------------------- 输入


def snap_to_levels(values: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """把 float32 栅格读出的传统评分吸附到六级网格上"""
    levels = np.asarray(CONVENTIONAL_LEVELS)
    nearest = levels[np.argmin(np.abs(values[:, None] - levels[None, :]), axis=1)]
    return np.where(np.abs(values - nearest) <= atol, nearest, values)


def conventional_from_csv(path: Path, sites: SiteTable) -> np.ndarray:
    """从 `id,conventional` CSV 按站点 id 对齐读取传统评分"""
    frame = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
    if not {"id", "conventional"} <= set(frame.columns):
        raise ConfigError(f"传统评分 CSV 需要 id,conventional 列: {path}", path=str(path))
    lookup = dict(zip(frame["id"], frame["conventional"].astype(float)))
    missing = [i for i in sites.ids if i not in lookup]
    if missing:
        raise SiteTableError(f"传统评分 CSV 缺少站点: {missing}", site_ids=missing)
    return np.array([lookup[i] for i in sites.ids], dtype=float)


def load_region(
    config: PipelineConfig, region: RegionInputs
) -> Tuple[MultiBandImage, SiteTable, Optional[np.ndarray]]:
    image = load_raster(config.resolve(region.raster))
    sites = load_sites(config.resolve(region.sites))
    sites.check_bounds(image.width, image.height)
    conventional = None
    if region.conventional_raster:
        conv_image = load_raster(config.resolve(region.conventional_raster))
        conventional = snap_to_levels(sample_at_sites(conv_image, sites))
    elif region.conventional_csv:
        conventional = conventional_from_csv(config.resolve(region.conventional_csv), sites)
    return image, sites, conventional


def synthesize_regions(config: PipelineConfig, write: bool) -> Dict[str, Any]:
    """按 synthetic 配置生成训练区 (seed) 与测试区 (seed+1)"""
    settings = config.synthetic
    update: Dict[str, Any] = {"outputs": []}
    for offset, region in enumerate(REGIONS):
        swath = replace(settings.swath, seed=config.seed + offset)
        image, sites = generate_labeled_dataset(swath, settings.n_background)
        conv_image = generate_conventional_raster(
            swath, sites, settings.conventional_informativeness
        )
        update[f"{region}_image"] = image
        update[f"{region}_sites"] = sites
        update[f"{region}_conventional"] = snap_to_levels(sample_at_sites(conv_image, sites))
        if write:
            written = [
                save_raster(image, output_file(config, f"synth.{region}.json")),
                save_sites(sites, output_file(config, f"synth.{region}.sites.csv")),
                save_raster(conv_image, output_file(config, f"synth.{region}.conventional.json")),
            ]
            update["outputs"] += [str(p) for p in written]
    return update


@stage("load_inputs")
def load_inputs(state: PipelineState) -> Dict[str, Any]:
    """读取训练区与测试区；已在状态中的输入不重复读取"""
    if state.get("training_image") is not None:
        return {}
    config = state["config"]
    if config.training is None:
        return synthesize_regions(config, state.get("write_outputs", True))

    config.check_files()
    update: Dict[str, Any] = {
        "test_image": None,
        "test_sites": None,
        "test_conventional": None,
    }
    for region in REGIONS:
        inputs = getattr(config, region)
        if inputs is None:
            continue
        image, sites, conventional = load_region(config, inputs)
        update[f"{region}_image"] = image
        update[f"{region}_sites"] = sites
        update[f"{region}_conventional"] = conventional
        logger.info(
            f"{region}: {image.width}×{image.height}, {image.header.band_count} 个波段, "
            f"{len(sites)} 个站点 (n1={sites.n1}, n0={sites.n0})"
        )
    return update


# ---------------------------------------------------------------- 变换与特征


@stage("transform")
def transform(state: PipelineState) -> Dict[str, Any]:
    """按配置的波段组合做波段差比变换"""
    config = state["config"]
    coeffs = (
        load_ktt_coefficients(config.resolve(config.ktt_coefficients))
        if config.ktt_coefficients
        else None
    )
    update: Dict[str, Any] = {"test_transformed": None}
    for region in REGIONS:
        image = state.get(f"{region}_image")
        if image is not None:
            update[f"{region}_transformed"] = build_band_configuration(
                image, config.band_configuration, coeffs
            )
    return update


def radii_table(config: PipelineConfig) -> RadiiTable:
    if config.radii_table:
        table = load_radii_table(config.resolve(config.radii_table))
        if len(table) != DEFAULT_ANNULI:
            logger.warning(f"自定义半径表有 {len(table)} 项（默认 {DEFAULT_ANNULI} 项），特征维度随之改变")
        return table
    return RadiiTable.default()


@stage("extract")
def extract(state: PipelineState) -> Dict[str, Any]:
    """在训练区与测试区的站点上提取环带特征"""
    config = state["config"]
    table = radii_table(config)
    update: Dict[str, Any] = {"test_features": None, "outputs": []}
    for region, suffix in zip(REGIONS, ("", ".test")):
        image = state.get(f"{region}_transformed")
        if image is None:
            continue
        features = extract_features(image, state[f"{region}_sites"], table, config.n_jobs)
        update[f"{region}_features"] = features
        if state.get("write_outputs", True):
            path = save_features(features, output_file(config, f"extract{suffix}.csv"))
            update["outputs"].append(str(path))
    return update


# ---------------------------------------------------------------- 模型


def kept_mask(decisions: np.ndarray) -> np.ndarray:
    """拒判样本不参与 ROC"""
    return np.asarray(decisions) != -1


def assessment_auc(result: LoocvResult) -> Optional[float]:
    keep = kept_mask(result.decisions)
    labels = result.labels[keep]
    if len(np.unique(labels)) < 2:
        return None
    return roc_curve(result.scores[keep], labels).auc


def save_assessment_table(result: LoocvResult, path: Path) -> Path:
    frame = pd.DataFrame(
        {
            "id": result.ids,
            "label": result.labels,
            "score": result.scores,
            "posterior": result.posteriors,
            "decision": result.decisions,
            "d_star": result.d_stars,
        }
    )
    return write_csv(path, frame)


@stage("assess")
def assess(state: PipelineState) -> Dict[str, Any]:
    """训练区嵌套 LOOCV：每个样本的外层分数与 d*"""
    config = state["config"]
    features: FeatureMatrix = state["training_features"]
    result = nested_loocv(
        features,
        None,
        config.pca.d_max,
        config.classifier.kind,
        model_options(config),
        config.n_jobs,
    )
    auc = assessment_auc(result)
    logger.info(f"训练区 LOOCV AUC: {auc}, 拒判率 {result.rejection_rate:.4f}")
    update: Dict[str, Any] = {"assessment": result, "assessment_auc": auc, "outputs": []}
    if state.get("write_outputs", True):
        update["outputs"] += [
            str(save_assessment(result, output_file(config, "assess.json"))),
            str(save_assessment_table(result, output_file(config, "assess.csv"))),
        ]
    return update


@stage("train")
def train(state: PipelineState) -> Dict[str, Any]:
    """在全部训练样本上选 d* 并拟合最终模型"""
    config = state["config"]
    model = train_full(
        state["training_features"],
        None,
        config.pca.d_max,
        config.classifier.kind,
        model_options(config),
    )
    update: Dict[str, Any] = {"model": model, "outputs": []}
    if state.get("write_outputs", True):
        update["outputs"].append(str(save_model(model, output_file(config, "train.json"))))
    return update


def save_predictions(
    features: FeatureMatrix, scores: np.ndarray, decisions: np.ndarray, path: Path
) -> Path:
    frame = pd.DataFrame(
        {"id": features.ids, "label": features.labels, "score": scores, "decision": decisions}
    )
    return write_csv(path, frame)


@stage("predict")
def predict(state: PipelineState) -> Dict[str, Any]:
    """用最终模型给测试区站点打分"""
    features = state.get("test_features")
    if features is None:
        logger.info("未配置测试区，跳过预测")
        return {"test_scores": None, "test_decisions": None}
    scores, decisions = predict_scores(state["model"], features)
    update: Dict[str, Any] = {"test_scores": scores, "test_decisions": decisions, "outputs": []}
    if state.get("write_outputs", True):
        path = save_predictions(features, scores, decisions, output_file(state["config"], "predict.csv"))
        update["outputs"].append(str(path))
    return update


# ---------------------------------------------------------------- 评估与报告


@dataclass
class Evaluation:
    """ROC、γ 选择与汇总"""

    summary: Dict[str, Any]
    curves: Dict[str, RocCurve] = field(default_factory=dict)
    selection: Optional[GammaSelection] = None
    pairs: Optional[ScoreTable] = None
    warnings: List[str] = field(default_factory=list)


def _scored_pairs(
    ids: List[str],
    labels: np.ndarray,
    scores: np.ndarray,
    decisions: np.ndarray,
    conventional: Optional[np.ndarray],
) -> Tuple[np.ndarray, np.ndarray, Optional[ScoreTable]]:
    keep = kept_mask(decisions)
    pairs = None
    if conventional is not None:
        pairs = build_score_table(ids, labels, conventional, scores).subset(keep)
    return scores[keep], labels[keep], pairs


def evaluate_results(
    config: PipelineConfig,
    assessment: LoocvResult,
    training_conventional: Optional[np.ndarray],
    test_ids: Optional[List[str]] = None,
    test_labels: Optional[np.ndarray] = None,
    test_scores: Optional[np.ndarray] = None,
    test_decisions: Optional[np.ndarray] = None,
    test_conventional: Optional[np.ndarray] = None,
) -> Evaluation:
    """增强 / 传统 / APM_γ 三条 ROC；γ* 优先在训练区 LOOCV 评分上选择"""
    warnings: List[str] = []
    train_scores, train_labels, train_pairs = _scored_pairs(
        assessment.ids,
        assessment.labels,
        assessment.scores,
        assessment.decisions,
        training_conventional,
    )

    if test_scores is not None:
        evaluated_on = "test"
        scores, labels, pairs = _scored_pairs(
            list(test_ids), np.asarray(test_labels), test_scores, test_decisions, test_conventional
        )
        n_total = len(test_scores)
    else:
        evaluated_on = "training_loocv"
        scores, labels, pairs = train_scores, train_labels, train_pairs
        n_total = len(assessment.scores)

    curves = {"enhanced": roc_curve(scores, labels)}
    summary: Dict[str, Any] = {
        "evaluated_on": evaluated_on,
        "n": n_total,
        "n_rejected": n_total - len(scores),
        "training_loocv_auc": assessment_auc(assessment),
    }

    selection = None
    if pairs is None:
        message = f"{evaluated_on} 缺少传统 APM 评分，跳过凸组合"
        logger.warning(message)
        warnings.append(message)
    else:
        selection_pairs, selected_on = (
            (train_pairs, "training_loocv") if train_pairs is not None else (pairs, evaluated_on)
        )
        selection = select_gamma(selection_pairs, config.gamma_grid, config.n_jobs)
        curves["conventional"] = roc_curve(pairs.conventional, pairs.labels)
        curves["combined"] = roc_curve(convex_combine(pairs, selection.gamma_star), pairs.labels)

        epsilon = min(TIEBREAK_EPSILON, 0.5 * tiebreak_bound(pairs))
        passed = tiebreak_refinement_check(pairs, epsilon)
        if not pairs.on_conventional_grid():
            message = "传统 APM 评分不全在六级网格上"
            logger.warning(message)
            warnings.append(message)
        summary["gamma"] = {
            "selected_on": selected_on,
            "gamma_star": selection.gamma_star,
            "auc_star": selection.auc_star,
            "auc_at_0": float(selection.aucs[0]),
            "auc_at_1": float(selection.aucs[-1]),
        }
        summary["tiebreak_check"] = {"epsilon": epsilon, "passed": passed}

    summary["auc"] = {name: curve.auc for name, curve in curves.items()}
    summary["tnr_at_fnr"] = {
        name: tnr_at_fnr_table(curve, config.fnr_levels) for name, curve in curves.items()
    }
    return Evaluation(summary, curves, selection, pairs, warnings)


def write_evaluation(config: PipelineConfig, evaluation: Evaluation) -> List[str]:
    written: List[Path] = []
    for name, curve in evaluation.curves.items():
        written.append(save_roc(curve, output_file(config, f"evaluate.roc.{name}.csv")))
    written.append(plot_roc(evaluation.curves, output_file(config, "evaluate.roc.svg")))
    if evaluation.selection is not None:
        gamma = evaluation.selection.gamma_star
        written.append(save_scores(evaluation.pairs, gamma, output_file(config, "evaluate.scores.csv")))
        written.append(save_auc_gamma(evaluation.selection, output_file(config, "evaluate.auc_gamma.csv")))
        written.append(plot_auc_gamma(evaluation.selection, output_file(config, "evaluate.auc_gamma.svg")))
    return [str(p) for p in written]


@stage("evaluate")
def evaluate(state: PipelineState) -> Dict[str, Any]:
    config = state["config"]
    features = state.get("test_features")
    evaluation = evaluate_results(
        config,
        state["assessment"],
        state.get("training_conventional"),
        features.ids if features is not None else None,
        features.labels if features is not None else None,
        state.get("test_scores"),
        state.get("test_decisions"),
        state.get("test_conventional"),
    )
    update: Dict[str, Any] = {
        "evaluation": {"summary": evaluation.summary, "warnings": evaluation.warnings},
        "outputs": [],
    }
    if state.get("write_outputs", True):
        update["outputs"] += write_evaluation(config, evaluation)
    return update


def build_report(
    config: PipelineConfig,
    assessment: LoocvResult,
    model: TrainedApm,
    evaluation: Dict[str, Any],
) -> Dict[str, Any]:
    """JSON 报告：只由配置与各阶段结果决定，不含时间戳与路径"""
    band_set = BAND_CONFIGURATIONS[config.band_configuration]
    labels = assessment.labels
    return {
        "band_configuration": config.band_configuration,
        "bdr_count": band_set.output_band_count,
        "feature_dimension": model.pca.input_dimension,
        "seed": config.seed,
        "classifier": config.classifier.to_dict(),
        "pca": config.pca.to_dict(),
        "training": {
            "n": int(len(labels)),
            "n1": int(np.sum(labels == 1)),
            "n0": int(np.sum(labels == 0)),
        },
        "assessment": {
            "auc": assessment_auc(assessment),
            "outer_error": assessment.outer_error,
            "rejection_rate": assessment.rejection_rate,
            "d_max": assessment.d_max,
            "d_star_histogram": assessment.d_star_histogram(),
        },
        "model": {
            "d_star": model.d_star,
            "classifier": model.classifier_tag,
            "explained_variance_ratio": float(np.sum(model.pca.explained_variance_ratio())),
        },
        "evaluation": evaluation["summary"],
        "warnings": list(assessment.warnings)
        + list(model.warnings)
        + list(evaluation.get("warnings", [])),
    }


@stage("report")
def report(state: PipelineState) -> Dict[str, Any]:
    config = state["config"]
    payload = build_report(config, state["assessment"], state["model"], state["evaluation"])
    update: Dict[str, Any] = {"report": payload, "outputs": []}
    if state.get("write_outputs", True):
        update["outputs"].append(str(write_json(output_file(config, "report.json"), payload)))
    return update
