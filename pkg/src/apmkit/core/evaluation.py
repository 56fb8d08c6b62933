"""ROC/AUC、凸组合 APM_γ、γ* 选择与图表输出"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..templates import template_manager
from .artifacts import write_csv, write_text_atomic
from .errors import ConfigError, PreconditionError
from .models import GammaSelection, RocCurve, ScoreTable

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Curves = Union[Mapping[str, RocCurve], Sequence[Tuple[str, RocCurve]]]

FNR_LEVELS = (0.05, 0.10, 0.20)
SCORE_COLUMNS = ["id", "label", "conventional", "enhanced", "combined"]
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """以每个不同分数为阈值（score ≥ τ 判为正类）构造 ROC 曲线

    相同分数作为一组处理，对应一条斜线段；AUC 用整数计数的梯形公式计算，
    与 Mann–Whitney 统计量（并列计 0.5）完全一致。
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.shape != y.shape or s.ndim != 1:
        raise PreconditionError("scores 与 labels 必须是等长一维数组")
    if not np.all(np.isfinite(s)):
        raise PreconditionError("scores 中包含非有限值")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise PreconditionError(
            "ROC 需要两个类别的样本", n_positive=n_pos, n_negative=n_neg
        )

    thresholds, inverse = np.unique(-s, return_inverse=True)
    thresholds = -thresholds
    tp = np.cumsum(np.bincount(inverse, weights=(y == 1), minlength=len(thresholds)))
    fp = np.cumsum(np.bincount(inverse, weights=(y == 0), minlength=len(thresholds)))
    tp = np.concatenate([[0], tp]).astype(np.int64)
    fp = np.concatenate([[0], fp]).astype(np.int64)

    # Σ Δfp·(tp_prev + tp) 为整数，除法只在最后做一次
    twice_area = int(np.sum(np.diff(fp) * (tp[:-1] + tp[1:])))
    return RocCurve(
        thresholds=np.concatenate([[np.inf], thresholds]),
        fpr=fp / n_neg,
        tpr=tp / n_pos,
        auc=twice_area / (2 * n_pos * n_neg),
        n_positive=n_pos,
        n_negative=n_neg,
    )


def auc_score(scores: Sequence[float], labels: Sequence[int]) -> float:
    return roc_curve(scores, labels).auc


def tnr_at_fnr_table(
    curve: RocCurve, levels: Sequence[float] = FNR_LEVELS
) -> Dict[str, float]:
    """固定假阴性率下可达到的最大真阴性率"""
    return {f"{level:.2f}": curve.tnr_at_fnr(level) for level in levels}


# ---------------------------------------------------------------- 凸组合


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise PreconditionError(f"γ 必须在 [0,1] 内: {gamma}", gamma=gamma)
    return gamma


def convex_combine(pairs: ScoreTable, gamma: float) -> np.ndarray:
    """APM_γ = (1-γ)·conventional + γ·enhanced"""
    gamma = _check_gamma(gamma)
    if gamma == 0.0:
        return pairs.conventional
    if gamma == 1.0:
        return pairs.enhanced
    return (1.0 - gamma) * pairs.conventional + gamma * pairs.enhanced


def default_gamma_grid() -> np.ndarray:
    """0.00 到 1.00，步长 0.01"""
    return np.round(np.linspace(0.0, 1.0, 101), 2)


def select_gamma(
    pairs: ScoreTable,
    grid: Optional[Sequence[float]] = None,
    n_jobs: int = 1,
) -> GammaSelection:
    """在 γ 网格上取 AUC 最大者；并列时取最小的 γ"""
    values = default_gamma_grid() if grid is None else np.asarray(grid, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise PreconditionError("γ 网格不能为空")
    for gamma in values:
        _check_gamma(gamma)
    values = np.unique(values)
    labels = pairs.labels

    def _auc(gamma: float) -> float:
        return roc_curve(convex_combine(pairs, gamma), labels).auc

    if n_jobs == 1:
        aucs = [_auc(g) for g in values]
    else:
        aucs = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(_auc)(g) for g in values)
    aucs = np.asarray(aucs, dtype=float)
    best = int(np.argmax(aucs))
    logger.info(
        f"γ 选择完成: γ*={values[best]:.2f}, AUC(γ*)={aucs[best]:.4f}, "
        f"AUC(0)={aucs[0]:.4f}, AUC(1)={aucs[-1]:.4f}"
    )
    return GammaSelection(gamma_star=float(values[best]), grid=values, aucs=aucs)


def tiebreak_bound(pairs: ScoreTable) -> float:
    """γ 小于该上界时，不同传统等级之间的排序不会被增强评分改变"""
    levels = np.unique(pairs.conventional)
    if len(levels) < 2:
        return 1.0
    min_gap = float(np.min(np.diff(levels)))
    enhanced = pairs.enhanced
    spread = float(enhanced.max() - enhanced.min()) if len(enhanced) else 0.0
    return min_gap / (min_gap + spread)


def tiebreak_refinement_check(pairs: ScoreTable, epsilon: float = 0.01) -> bool:
    """γ = ε 时 APM_γ 的排序是否等于 (conventional, enhanced) 的字典序

    不同传统等级之间必须严格保序，同一等级内按增强评分非降。
    """
    bound = tiebreak_bound(pairs)
    if not 0.0 < epsilon < bound:
        raise PreconditionError(
            f"ε={epsilon} 不满足 0 < ε < {bound:.6g}", epsilon=epsilon, bound=bound
        )
    if len(pairs) < 2:
        return True

    conventional = pairs.conventional
    order = np.lexsort((pairs.enhanced, conventional))
    combined = convex_combine(pairs, epsilon)[order]
    step = np.diff(combined)
    level_change = np.diff(conventional[order]) > 0
    preserved = bool(np.all(step[level_change] > 0))
    refined = bool(np.all(step >= 0))
    if not (preserved and refined):
        logger.warning(f"tiebreak 检查失败: 跨等级保序={preserved}, 等级内保序={refined}")
    return preserved and refined


# ---------------------------------------------------------------- 读写


def build_score_table(
    ids: Sequence[str],
    labels: Sequence[int],
    conventional: Sequence[float],
    enhanced: Sequence[float],
) -> ScoreTable:
    return ScoreTable.from_arrays(
        list(ids), np.asarray(conventional), np.asarray(enhanced), np.asarray(labels)
    )


def save_scores(pairs: ScoreTable, gamma: float, path: PathLike) -> Path:
    """导出 `id,label,conventional,enhanced,combined`，combined 取 γ 处的组合分数"""
    frame = pd.DataFrame(
        {
            "id": pairs.ids,
            "label": pairs.labels,
            "conventional": pairs.conventional,
            "enhanced": pairs.enhanced,
            "combined": convex_combine(pairs, gamma),
        },
        columns=SCORE_COLUMNS,
    )
    return write_csv(path, frame)


def load_scores(path: PathLike) -> ScoreTable:
    """读取评分 CSV；combined 列可选"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"评分文件不存在: {path}", path=str(path))
    frame = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
    missing = [c for c in SCORE_COLUMNS[:4] if c not in frame.columns]
    if missing:
        raise ConfigError(f"评分文件缺少列 {missing}: {path}", path=str(path))
    return build_score_table(
        frame["id"].tolist(),
        frame["label"].to_numpy(dtype=int),
        frame["conventional"].to_numpy(dtype=float),
        frame["enhanced"].to_numpy(dtype=float),
    )


def save_roc(curve: RocCurve, path: PathLike) -> Path:
    frame = pd.DataFrame(
        {"tau": curve.thresholds, "fpr": curve.fpr, "tpr": curve.tpr},
        columns=["tau", "fpr", "tpr"],
    )
    return write_csv(path, frame)


def save_auc_gamma(selection: GammaSelection, path: PathLike) -> Path:
    frame = pd.DataFrame({"gamma": selection.grid, "auc": selection.aucs})
    return write_csv(path, frame)


# ---------------------------------------------------------------- SVG


class _Frame:
    """绘图区几何：单位正方形 [0,1]² 映射到像素坐标"""

    def __init__(self, size: int = 480, margin: int = 56):
        self.size = size
        self.left = margin
        self.top = margin // 2
        self.extent = size - margin - margin // 2
        self.right = self.left + self.extent
        self.bottom = self.top + self.extent
        self.center = self.left + self.extent / 2

    def x(self, u: float) -> float:
        return self.left + u * self.extent

    def y(self, v: float) -> float:
        return self.bottom - v * self.extent

    def context(self) -> Dict[str, str]:
        return {
            "left": _fmt(self.left),
            "top": _fmt(self.top),
            "right": _fmt(self.right),
            "bottom": _fmt(self.bottom),
            "extent": _fmt(self.extent),
            "center": _fmt(self.center),
            "bottom_label": _fmt(self.bottom + 16),
            "left_label": _fmt(self.left - 6),
            "x_title": _fmt(self.bottom + 36),
            "y_title": _fmt(self.left - 40),
        }

    def polyline(self, us: np.ndarray, vs: np.ndarray) -> str:
        return " ".join(f"{_fmt(self.x(u))},{_fmt(self.y(v))}" for u, v in zip(us, vs))

    def legend(self, index: int, label: str, color: str) -> Dict[str, str]:
        y = self.bottom - 12 - 18 * index
        x = self.left + self.extent * 0.45
        return {
            "label": label,
            "color": color,
            "legend_x": _fmt(x),
            "legend_x2": _fmt(x + 24),
            "legend_text_x": _fmt(x + 30),
            "legend_y": _fmt(y),
        }


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _ticks(frame: _Frame, lo: float = 0.0, hi: float = 1.0):
    values = np.linspace(lo, hi, 6)
    span = hi - lo if hi > lo else 1.0
    x_ticks = [{"x": _fmt(frame.x((v - lo) / span)), "label": f"{v:.1f}"} for v in values]
    y_ticks = [{"y": _fmt(frame.y((v - lo) / span)), "label": f"{v:.2f}"} for v in values]
    return x_ticks, y_ticks


def _render(chart: str, path: PathLike, **context) -> Path:
    return write_text_atomic(path, template_manager.render_svg(chart, **context))


def plot_roc(curves: Curves, path: PathLike, title: str = "ROC") -> Path:
    """每条曲线一条折线，图例中标注 AUC"""
    items: List[Tuple[str, RocCurve]] = list(
        curves.items() if isinstance(curves, Mapping) else curves
    )
    if not items:
        raise PreconditionError("plot_roc 至少需要一条曲线")
    frame = _Frame()
    x_ticks, _ = _ticks(frame)
    _, y_ticks = _ticks(frame)
    rendered = []
    for i, (name, curve) in enumerate(items):
        color = PALETTE[i % len(PALETTE)]
        entry = frame.legend(i, f"{name} (AUC = {curve.auc:.3f})", color)
        entry["points"] = frame.polyline(curve.fpr, curve.tpr)
        rendered.append(entry)
    return _render(
        "roc_curve",
        path,
        size=frame.size,
        title=title,
        frame=frame.context(),
        x_ticks=x_ticks,
        y_ticks=y_ticks,
        x_label="false positive rate",
        y_label="true positive rate",
        curves=rendered,
    )


def plot_auc_gamma(selection: GammaSelection, path: PathLike, title: str = "AUC vs gamma") -> Path:
    """AUC-γ 曲线，纵轴范围按数据自适应，并标出 γ*"""
    frame = _Frame()
    lo = float(np.floor(selection.aucs.min() * 20) / 20)
    hi = float(np.ceil(selection.aucs.max() * 20) / 20)
    if hi <= lo:
        lo, hi = max(0.0, lo - 0.05), min(1.0, hi + 0.05)
    span = hi - lo
    x_ticks, _ = _ticks(frame)
    _, y_ticks = _ticks(frame, lo, hi)
    entry = frame.legend(0, f"AUC(γ*={selection.gamma_star:.2f}) = {selection.auc_star:.3f}", PALETTE[0])
    entry["points"] = frame.polyline(selection.grid, (selection.aucs - lo) / span)
    marker = {
        "x": _fmt(frame.x(selection.gamma_star)),
        "y": _fmt(frame.y((selection.auc_star - lo) / span)),
    }
    return _render(
        "auc_gamma",
        path,
        size=frame.size,
        title=title,
        frame=frame.context(),
        x_ticks=x_ticks,
        y_ticks=y_ticks,
        x_label="gamma",
        y_label="AUC",
        curves=[entry],
        marker=marker,
    )
