"""特征提取 g (PCA) 与分类器 h (LDA / (k,l)-NN)，以及嵌套留一交叉验证

嵌套 LOOCV 的内层循环对每个候选维数 d 估计误判率 ε_d，取最小 argmin 作为 d*；
外层用 d* 在其余 n-1 个样本上重新拟合 PCA 与分类器，再给留出样本打分。
内层各折的 PCA 由外层训练集的 Gram 矩阵推出（核形式的线性 PCA），
留出样本只作为查询行参与，不影响中心化、主成分和分类器拟合。

外层分数默认取成对排名 (pair_rank)：内层第 j 折的模型既不含 j 也不含留出样本 s，
用它比较 s 与 j 的分数，s 胜出的比例即为 s 的分数。标签随机时每次比较都是公平的，
因此零假设下 AUC 以 0.5 为中心；直接使用后验概率时，留一去掉样本会把它所在类的
均值推离它自己，AUC 系统性偏低。
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.special import expit
from sklearn.model_selection import LeaveOneOut

from .artifacts import read_json, write_json
from .errors import ModelError, PreconditionError
from .models import (
    ConstantModel,
    FeatureMatrix,
    KnnModel,
    LdaModel,
    LoocvResult,
    PcaModel,
    TrainedApm,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ArrayLike = Union[np.ndarray, FeatureMatrix]
Classifier = Union[LdaModel, KnnModel, ConstantModel]

CLASSIFIERS = ("lda", "knn")
PRIORS = ("empirical", "equal")
STRATEGIES = ("error", "variance_threshold")
OUTER_SCORES = ("pair_rank", "posterior")
DEFAULT_D_MAX_CAP = 60
# 相对奇异值阈值，低于该值的主成分视为零方差
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class ModelOptions:
    """分类器与 PCA 维数选择参数"""

    shrinkage: float = 0.1
    priors: str = "empirical"
    k: int = 5
    l: int = 3
    strategy: str = "error"
    variance_threshold: float = 0.95
    standardize: bool = False
    outer_score: str = "pair_rank"

    def __post_init__(self):
        if not 0.0 <= self.shrinkage <= 1.0:
            raise PreconditionError(f"shrinkage 必须在 [0,1] 内: {self.shrinkage}")
        if self.priors not in PRIORS:
            raise PreconditionError(f"priors 必须是 {PRIORS} 之一: {self.priors}")
        if not 1 <= self.l <= self.k:
            raise PreconditionError(f"需要 1 ≤ l ≤ k: k={self.k}, l={self.l}")
        if self.strategy not in STRATEGIES:
            raise PreconditionError(f"strategy 必须是 {STRATEGIES} 之一: {self.strategy}")
        if not 0.0 < self.variance_threshold <= 1.0:
            raise PreconditionError(
                f"variance_threshold 必须在 (0,1] 内: {self.variance_threshold}"
            )
        if self.outer_score not in OUTER_SCORES:
            raise PreconditionError(
                f"outer_score 必须是 {OUTER_SCORES} 之一: {self.outer_score}"
            )


def _as_matrix(X: ArrayLike) -> np.ndarray:
    values = X.values if isinstance(X, FeatureMatrix) else X
    A = np.asarray(values, dtype=np.float64)
    if A.ndim == 1:
        A = A[np.newaxis, :]
    if A.ndim != 2:
        raise ModelError(f"特征矩阵必须是二维: ndim={A.ndim}")
    return A


def _as_labels(X: ArrayLike, y: Optional[Sequence[int]]) -> np.ndarray:
    if y is None:
        if not isinstance(X, FeatureMatrix):
            raise ModelError("未提供标签")
        y = X.labels
    labels = np.asarray(y, dtype=int)
    if labels.ndim != 1 or np.any((labels != 0) & (labels != 1)):
        raise ModelError("标签必须是 0/1 一维数组")
    return labels


# ---------------------------------------------------------------- PCA


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """符号约定：每个主成分绝对值最大的分量为正"""
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def _column_scale(A: np.ndarray) -> np.ndarray:
    scale = A.std(axis=0, ddof=1)
    scale[~(scale > 0)] = 1.0
    return scale


def fit_pca(X: ArrayLike, d: int, standardize: bool = False) -> PcaModel:
    """中心化（可选逐列标准化）后取前 d 个右奇异向量"""
    A = _as_matrix(X)
    n, dim = A.shape
    if n < 2:
        raise ModelError(f"PCA 至少需要 2 行数据，实际 {n}")
    if not 1 <= d <= min(n - 1, dim):
        raise ModelError(f"PCA 维数 d={d} 超出范围 [1, {min(n - 1, dim)}]")

    center = A.mean(axis=0)
    centered = A - center
    scale = None
    if standardize:
        scale = _column_scale(A)
        centered = centered / scale

    _, s, vt = linalg.svd(centered, full_matrices=False)
    variance = s**2 / (n - 1)
    return PcaModel(
        center=center,
        components=_fix_signs(vt[:d]),
        explained_variance=variance[:d],
        scale=scale,
        total_variance=float(np.sum(centered**2) / (n - 1)),
    )


def project(pca: PcaModel, X: ArrayLike) -> np.ndarray:
    """Z = components · (x - center)，n × d"""
    A = _as_matrix(X)
    if A.shape[1] != pca.input_dimension:
        raise ModelError(
            f"列数 {A.shape[1]} 与 PCA 输入维数 {pca.input_dimension} 不一致"
        )
    centered = A - pca.center
    if pca.scale is not None:
        centered = centered / pca.scale
    return centered @ pca.components.T


def reconstruct(pca: PcaModel, Z: np.ndarray) -> np.ndarray:
    """由降维坐标重建原始空间中的行"""
    X = np.atleast_2d(Z) @ pca.components
    if pca.scale is not None:
        X = X * pca.scale
    return X + pca.center


def cumulative_variance_ratio(explained: np.ndarray, total: float) -> np.ndarray:
    if total <= 0:
        return np.ones_like(explained)
    return np.cumsum(explained) / total


def variance_threshold_dimension(
    explained: np.ndarray, total: float, threshold: float
) -> int:
    """累计解释方差比例首次达到阈值的最小维数"""
    ratio = cumulative_variance_ratio(explained, total)
    hits = np.flatnonzero(ratio >= threshold - 1e-12)
    return int(hits[0] + 1) if len(hits) else len(explained)


# ---------------------------------------------------------------- LDA


def _class_moments(Z: np.ndarray, y: np.ndarray):
    means = np.vstack([Z[y == c].mean(axis=0) for c in (0, 1)])
    residual = Z - means[y]
    dof = max(len(y) - 2, 1)
    pooled = residual.T @ residual / dof
    counts = np.array([np.sum(y == 0), np.sum(y == 1)], dtype=float)
    return means, pooled, counts


def _shrunk_covariance(pooled: np.ndarray, shrinkage: float) -> np.ndarray:
    """(1-λ)·Σ_pooled + λ·(tr/d)·I，迹为零时目标取单位阵"""
    d = pooled.shape[0]
    target = np.trace(pooled) / d
    if not target > 0:
        target = 1.0
    covariance = (1.0 - shrinkage) * pooled + shrinkage * target * np.eye(d)
    return 0.5 * (covariance + covariance.T)


def _log_priors(counts: np.ndarray, priors: str) -> np.ndarray:
    if priors == "equal":
        return np.log(np.array([0.5, 0.5]))
    return np.log(counts / counts.sum())


def _assemble_lda(
    means: np.ndarray,
    pooled: np.ndarray,
    counts: np.ndarray,
    shrinkage: float,
    priors: str,
) -> LdaModel:
    covariance = _shrunk_covariance(pooled, shrinkage)
    try:
        linalg.cholesky(covariance, lower=True)
    except linalg.LinAlgError as e:
        raise ModelError(f"收缩后的协方差矩阵不是正定的 (shrinkage={shrinkage})") from e
    return LdaModel(
        class_means=means,
        pooled_covariance=covariance,
        log_priors=_log_priors(counts, priors),
        shrinkage=shrinkage,
    )


def _lda_logits_by_dimension(
    means: np.ndarray,
    pooled: np.ndarray,
    counts: np.ndarray,
    queries: np.ndarray,
    d_max: int,
    options: ModelOptions,
) -> np.ndarray:
    """前 d 个坐标上的 LDA 对数几率，d = 1..d_max，返回 d_max × 查询数

    第 d 个方程组是收缩协方差 Σ_d 与单位阵拼成的分块对角阵，右端在 d 之后为零，
    解向量在 d 之后也为零，因此 d_max 个方程组可以一次批量求解。
    """
    eye = np.eye(d_max)
    systems = np.broadcast_to(eye, (d_max, d_max, d_max)).copy()
    delta = means[1, :d_max] - means[0, :d_max]
    rhs = np.zeros((d_max, d_max, 1))
    for d in range(1, d_max + 1):
        systems[d - 1, :d, :d] = _shrunk_covariance(pooled[:d, :d], options.shrinkage)
        rhs[d - 1, :d, 0] = delta[:d]
    try:
        np.linalg.cholesky(systems)
    except np.linalg.LinAlgError as e:
        raise ModelError(
            f"收缩后的协方差矩阵不是正定的 (shrinkage={options.shrinkage})"
        ) from e
    weights = np.linalg.solve(systems, rhs)[:, :, 0]
    midpoint = 0.5 * (means[0, :d_max] + means[1, :d_max])
    log_priors = _log_priors(counts, options.priors)
    logits = (queries[:, :d_max] - midpoint) @ weights.T + (log_priors[1] - log_priors[0])
    return logits.T


def fit_lda(
    Xd: np.ndarray,
    y: Sequence[int],
    shrinkage: float = 0.1,
    priors: str = "empirical",
) -> LdaModel:
    """两类 LDA：合并类内协方差向迹缩放的单位阵收缩"""
    Z = _as_matrix(Xd)
    labels = _as_labels(Z, y)
    if len(labels) != len(Z):
        raise ModelError("标签数量与样本数不一致")
    if Z.shape[1] < 1:
        raise ModelError("LDA 输入维数必须 ≥ 1")
    if np.all(labels == labels[0]):
        raise ModelError("LDA 需要两个类别的样本，当前只有一个类别")
    if priors not in PRIORS:
        raise ModelError(f"priors 必须是 {PRIORS} 之一: {priors}")
    means, pooled, counts = _class_moments(Z, labels)
    return _assemble_lda(means, pooled, counts, shrinkage, priors)


def lda_log_odds(model: LdaModel, Z: np.ndarray) -> np.ndarray:
    """类 1 相对类 0 的对数几率"""
    Z = _as_matrix(Z)
    if Z.shape[1] != model.dimension:
        raise ModelError(f"输入维数 {Z.shape[1]} 与 LDA 维数 {model.dimension} 不一致")
    mu0, mu1 = model.class_means
    w = linalg.solve(model.pooled_covariance, mu1 - mu0, assume_a="pos")
    midpoint = 0.5 * (mu0 + mu1)
    return (Z - midpoint) @ w + (model.log_priors[1] - model.log_priors[0])


def posterior(model: LdaModel, x: np.ndarray) -> float:
    """类 1 的后验概率"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ModelError("posterior 需要一维特征向量")
    return float(expit(lda_log_odds(model, x)[0]))


def class_posteriors(model: LdaModel, x: np.ndarray) -> Tuple[float, float]:
    """(类 0 后验, 类 1 后验)"""
    logit = lda_log_odds(model, np.asarray(x, dtype=float))[0]
    return float(expit(-logit)), float(expit(logit))


# ---------------------------------------------------------------- (k,l)-NN


def fit_knn(Xd: np.ndarray, y: Sequence[int], k: int, l: int) -> KnnModel:
    Z = _as_matrix(Xd)
    labels = _as_labels(Z, y)
    return KnnModel(features=Z, labels=labels, k=k, l=l)


def knn_votes(model: KnnModel, x: np.ndarray) -> int:
    """k 个最近训练样本中类 1 的数量；距离相同时按训练行序号"""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dimension,):
        raise ModelError(f"输入维数 {x.shape} 与训练维数 {model.dimension} 不一致")
    distance2 = np.sum((model.features - x) ** 2, axis=1)
    nearest = np.argsort(distance2, kind="stable")[: model.k]
    return int(model.labels[nearest].sum())


def _kl_decision(votes: int, k: int, l: int) -> int:
    if votes >= l:
        return 1
    if votes <= k - l:
        return 0
    return -1


def knn_kl_classify(model: KnnModel, x: np.ndarray) -> int:
    """(k,l) 规则：V ≥ l 判 1，V ≤ k-l 判 0，否则拒判 -1"""
    return _kl_decision(knn_votes(model, x), model.k, model.l)


# ---------------------------------------------------------------- 通用分类接口


def fit_classifier(
    Z: np.ndarray, y: np.ndarray, classifier: str, options: ModelOptions
) -> Classifier:
    """按类型拟合分类器；LDA 在单一类别训练集上退化为常数分类器"""
    if classifier == "knn":
        return fit_knn(Z, y, options.k, options.l)
    if classifier != "lda":
        raise ModelError(f"未知分类器: {classifier}")
    if np.all(y == y[0]):
        return ConstantModel(label=int(y[0]), dimension=Z.shape[1])
    return fit_lda(Z, y, options.shrinkage, options.priors)


def classify(model: Classifier, Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (分数, 判决)；LDA 判决为 I{posterior > 0.5}，kNN 分数为 V/k"""
    Z = _as_matrix(Z)
    if isinstance(model, LdaModel):
        logit = lda_log_odds(model, Z)
        return expit(logit), (logit > 0.0).astype(int)
    if isinstance(model, KnnModel):
        votes = np.array([knn_votes(model, z) for z in Z])
        decisions = np.array([_kl_decision(v, model.k, model.l) for v in votes])
        return votes / model.k, decisions
    scores = np.full(len(Z), float(model.label))
    return scores, np.full(len(Z), model.label, dtype=int)


# ---------------------------------------------------------------- 折内几何


def _gram(X: np.ndarray, rows: np.ndarray, origin_rows: np.ndarray, scale=None):
    """以 origin_rows 的均值为原点的行内积矩阵（只含 rows）"""
    origin = X[origin_rows].mean(axis=0)
    shifted = X[rows] - origin
    if scale is not None:
        shifted = shifted / scale
    return shifted @ shifted.T


def _pca_scores_from_gram(
    G: np.ndarray, train: np.ndarray, query: np.ndarray, d_max: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """由 Gram 矩阵求训练行与查询行的前 d_max 个主成分坐标

    G 的行列索引与 train/query 同一编号体系；返回
    (训练坐标 m×d_max, 查询坐标 q×d_max, 特征值/(m-1), 总方差)。
    """
    m = len(train)
    K = G[np.ix_(train, train)]
    row_mean = K.mean(axis=0)
    grand = row_mean.mean()
    Kc = K - row_mean[:, None] - row_mean[None, :] + grand
    Kc = 0.5 * (Kc + Kc.T)

    evals, evecs = linalg.eigh(Kc)
    evals = np.clip(evals[::-1][:d_max], 0.0, None)
    evecs = evecs[:, ::-1][:, :d_max]
    singular = np.sqrt(evals)
    top = singular[0] if len(singular) else 0.0
    keep = singular > _RANK_TOL * top if top > 0 else np.zeros_like(singular, bool)
    inv = np.where(keep, 1.0 / np.where(keep, singular, 1.0), 0.0)

    train_scores = evecs * np.where(keep, singular, 0.0)
    Kq = G[np.ix_(query, train)]
    Kq_c = Kq - Kq.mean(axis=1, keepdims=True) - row_mean[None, :] + grand
    query_scores = (Kq_c @ evecs) * inv

    dof = max(m - 1, 1)
    total = float(np.trace(Kc) / dof)
    if len(evals) < d_max:
        pad = d_max - len(evals)
        train_scores = np.pad(train_scores, ((0, 0), (0, pad)))
        query_scores = np.pad(query_scores, ((0, 0), (0, pad)))
        evals = np.pad(evals, (0, pad))
    return train_scores, query_scores, evals / dof, total


class _FoldGeometry:
    """一个外层训练集上的内积结构，供内层各折复用"""

    def __init__(self, X: np.ndarray, train: np.ndarray, query: np.ndarray, standardize: bool):
        self.X = X
        self.standardize = standardize
        # 局部编号：先训练行再查询行
        self.rows = np.concatenate([train, query])
        self.local = {int(r): i for i, r in enumerate(self.rows)}
        self.G = None if standardize else _gram(X, self.rows, train)

    def scores(self, train: Sequence[int], query: Sequence[int], d_max: int):
        train = np.asarray(train, dtype=int)
        query = np.asarray(query, dtype=int)
        if self.G is not None:
            lt = np.array([self.local[int(r)] for r in train], dtype=int)
            lq = np.array([self.local[int(r)] for r in query], dtype=int)
            return _pca_scores_from_gram(self.G, lt, lq, d_max)
        # 标准化时尺度依赖于具体训练集，逐折重算
        scale = _column_scale(self.X[train])
        rows = np.concatenate([train, query])
        G = _gram(self.X, rows, train, scale)
        lt = np.arange(len(train))
        lq = np.arange(len(train), len(rows))
        return _pca_scores_from_gram(G, lt, lq, d_max)


def _scores_by_dimension(
    Z: np.ndarray,
    y: np.ndarray,
    queries: np.ndarray,
    d_max: int,
    classifier: str,
    options: ModelOptions,
) -> Tuple[np.ndarray, np.ndarray]:
    """对 d = 1..d_max 分别拟合分类器，给每个查询行打分并判决

    返回 (分数, 判决)，形状均为 d_max × 查询数；LDA 分数为对数几率，kNN 为 V/k。
    """
    n_queries = len(queries)
    scores = np.empty((d_max, n_queries))
    decisions = np.empty((d_max, n_queries), dtype=int)
    if classifier == "knn":
        for q, zq in enumerate(queries):
            cumulative = np.cumsum((Z - zq) ** 2, axis=1)
            for d in range(1, d_max + 1):
                nearest = np.argsort(cumulative[:, d - 1], kind="stable")[: options.k]
                votes = int(y[nearest].sum())
                scores[d - 1, q] = votes / options.k
                decisions[d - 1, q] = _kl_decision(votes, options.k, options.l)
        return scores, decisions

    if np.all(y == y[0]):
        scores[:] = float(y[0])
        decisions[:] = y[0]
        return scores, decisions
    means, pooled, counts = _class_moments(Z, y)
    scores = _lda_logits_by_dimension(means, pooled, counts, queries, d_max, options)
    return scores, (scores > 0.0).astype(int)


def _inner_loocv(
    geometry: _FoldGeometry,
    y: np.ndarray,
    train: np.ndarray,
    d_max: int,
    classifier: str,
    options: ModelOptions,
    partner: Optional[int] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """在 train 上做一次留一交叉验证

    返回各维数的 0/1 误判率（拒判计为误判）；给出 partner 时另返回各维数下
    partner 在每个内层模型上胜过被留出行的比例（平局计 0.5）。
    """
    errors = np.zeros(d_max)
    wins = None if partner is None else np.zeros(d_max)
    for inner_train, inner_test in LeaveOneOut().split(train):
        rest = train[inner_train]
        held = train[inner_test]
        query = held if partner is None else np.append(held, partner)
        Z, zq, _, _ = geometry.scores(rest, query, d_max)
        scores, decisions = _scores_by_dimension(Z, y[rest], zq, d_max, classifier, options)
        errors += decisions[:, 0] != y[held[0]]
        if wins is not None:
            wins += (scores[:, 1] > scores[:, 0]) + 0.5 * (scores[:, 1] == scores[:, 0])
    if wins is not None:
        wins /= len(train)
    return errors / len(train), wins


def _select_dimension(
    geometry: _FoldGeometry,
    y: np.ndarray,
    train: np.ndarray,
    d_max: int,
    classifier: str,
    options: ModelOptions,
    partner: Optional[int] = None,
) -> Tuple[int, List[float], Optional[float]]:
    """返回 (d*, 记录, partner 在 d* 下的成对排名)

    error 策略的记录为 ε_d，方差策略为累计方差比例；未给 partner 时排名为 None。
    """
    if options.strategy == "variance_threshold":
        _, _, explained, total = geometry.scores(train, train[:1], d_max)
        d_star = variance_threshold_dimension(explained, total, options.variance_threshold)
        rank = None
        if partner is not None:
            _, wins = _inner_loocv(geometry, y, train, d_star, classifier, options, partner)
            rank = float(wins[d_star - 1])
        return d_star, cumulative_variance_ratio(explained, total).tolist(), rank
    errors, wins = _inner_loocv(geometry, y, train, d_max, classifier, options, partner)
    # argmin 取第一个最小值，即最小的 d
    d_star = int(np.argmin(errors) + 1)
    rank = None if wins is None else float(wins[d_star - 1])
    return d_star, errors.tolist(), rank


# ---------------------------------------------------------------- 嵌套 LOOCV


def _feasible_d_max(
    requested: Optional[int], inner_train_size: int, dimension: int, warnings: List[str]
) -> int:
    feasible = max(1, min(inner_train_size - 1, dimension))
    if requested is None:
        return min(feasible, DEFAULT_D_MAX_CAP)
    d_max = int(requested)
    if d_max < 1:
        raise PreconditionError(f"d_max 必须 ≥ 1: {d_max}")
    if d_max > feasible:
        message = f"d_max={d_max} 超过内层折可行上限 {feasible}，已截断"
        logger.warning(message)
        warnings.append(message)
        d_max = feasible
    return d_max


def _check_classifier(classifier: str, options: ModelOptions, inner_train_size: int):
    if classifier not in CLASSIFIERS:
        raise PreconditionError(f"classifier 必须是 {CLASSIFIERS} 之一: {classifier}")
    if classifier == "knn" and options.k > inner_train_size:
        raise PreconditionError(
            f"k={options.k} 大于内层训练集大小 {inner_train_size}",
            k=options.k,
        )


@dataclass
class FoldResult:
    """单个外层折的结果"""

    index: int
    score: float
    posterior: float
    decision: int
    d_star: int
    record: List[float]
    degenerate: bool


def loocv_fold(
    X: np.ndarray,
    y: np.ndarray,
    s: int,
    d_max: int,
    classifier: str,
    options: ModelOptions,
) -> FoldResult:
    """外层第 s 折：内层选 d*，再在其余 n-1 个样本上拟合并给 s 打分"""
    n = len(y)
    train = np.delete(np.arange(n), s)
    geometry = _FoldGeometry(X, train, np.array([s]), options.standardize)
    partner = s if options.outer_score == "pair_rank" else None
    d_star, record, rank = _select_dimension(
        geometry, y, train, d_max, classifier, options, partner
    )

    Z, zq, _, _ = geometry.scores(train, [s], d_star)
    model = fit_classifier(Z, y[train], classifier, options)
    posteriors, decisions = classify(model, zq)
    return FoldResult(
        index=s,
        score=float(posteriors[0]) if rank is None else rank,
        posterior=float(posteriors[0]),
        decision=int(decisions[0]),
        d_star=d_star,
        record=record,
        degenerate=isinstance(model, ConstantModel),
    )


def nested_loocv(
    X: ArrayLike,
    y: Optional[Sequence[int]] = None,
    d_max: Optional[int] = None,
    classifier: str = "lda",
    options: Optional[ModelOptions] = None,
    n_jobs: int = 1,
) -> LoocvResult:
    """嵌套双层留一交叉验证，返回每个样本的外层分数、d* 与内层误差曲线"""
    options = options or ModelOptions()
    A = _as_matrix(X)
    labels = _as_labels(X, y)
    n = len(labels)
    if n != len(A):
        raise ModelError("标签数量与样本数不一致")
    if n < 3:
        raise PreconditionError(f"嵌套 LOOCV 至少需要 3 个样本，实际 {n}")
    if labels.min() == labels.max():
        raise PreconditionError("嵌套 LOOCV 需要两个类别的样本")
    _check_classifier(classifier, options, n - 2)

    warnings: List[str] = []
    d_max = _feasible_d_max(d_max, n - 2, A.shape[1], warnings)
    logger.info(
        f"嵌套 LOOCV 开始: n={n}, d̃={A.shape[1]}, d_max={d_max}, "
        f"classifier={classifier}, strategy={options.strategy}, "
        f"outer_score={options.outer_score}"
    )

    if n_jobs == 1:
        folds = [loocv_fold(A, labels, s, d_max, classifier, options) for s in range(n)]
    else:
        folds = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(loocv_fold)(A, labels, s, d_max, classifier, options)
            for s in range(n)
        )

    degenerate = [f.index for f in folds if f.degenerate]
    if degenerate:
        message = f"{len(degenerate)} 个外层折训练集只有单一类别，使用常数分类器"
        logger.warning(message)
        warnings.append(message)

    ids = X.ids if isinstance(X, FeatureMatrix) else [str(i) for i in range(n)]
    result = LoocvResult(
        ids=list(ids),
        labels=labels,
        scores=np.array([f.score for f in folds]),
        posteriors=np.array([f.posterior for f in folds]),
        decisions=np.array([f.decision for f in folds], dtype=int),
        d_stars=np.array([f.d_star for f in folds], dtype=int),
        cv_errors=[f.record for f in folds],
        d_max=d_max,
        outer_score=options.outer_score,
        warnings=warnings,
    )
    logger.info(
        f"嵌套 LOOCV 完成: 外层误判率 {result.outer_error:.4f}, "
        f"d* 分布 {result.d_star_histogram()}"
    )
    return result


def train_full(
    X: ArrayLike,
    y: Optional[Sequence[int]] = None,
    d_max: Optional[int] = None,
    classifier: str = "lda",
    options: Optional[ModelOptions] = None,
) -> TrainedApm:
    """在全部样本上做一次 LOOCV 选 d*，再拟合 PCA(d*) 与分类器"""
    options = options or ModelOptions()
    A = _as_matrix(X)
    labels = _as_labels(X, y)
    n = len(labels)
    if n < 3:
        raise PreconditionError(f"训练至少需要 3 个样本，实际 {n}")
    if labels.min() == labels.max():
        raise PreconditionError("训练需要两个类别的样本")
    _check_classifier(classifier, options, n - 1)

    warnings: List[str] = []
    d_max = _feasible_d_max(d_max, n - 1, A.shape[1], warnings)
    everyone = np.arange(n)
    geometry = _FoldGeometry(A, everyone, everyone[:0], options.standardize)
    d_star, record, _ = _select_dimension(geometry, labels, everyone, d_max, classifier, options)

    pca = fit_pca(A, d_star, standardize=options.standardize)
    model = fit_classifier(project(pca, A), labels, classifier, options)
    logger.info(f"全量训练完成: d*={d_star}, classifier={classifier}")
    return TrainedApm(
        pca=pca,
        classifier=model,
        cv_record=record,
        d_star=d_star,
        strategy=options.strategy,
        warnings=warnings,
    )


def predict_scores(apm: TrainedApm, X: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """对未见样本打分：classifier ∘ project"""
    A = _as_matrix(X)
    if len(A) == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    return classify(apm.classifier, project(apm.pca, A))


def save_model(apm: TrainedApm, path: PathLike) -> Path:
    return write_json(path, apm.to_dict())


def load_model(path: PathLike) -> TrainedApm:
    """读取 save_model 写出的模型 JSON"""
    if not Path(path).is_file():
        raise ModelError(f"模型文件不存在: {path}", path=str(path))
    return TrainedApm.from_dict(read_json(path))


def save_assessment(result: LoocvResult, path: PathLike) -> Path:
    return write_json(path, result.to_dict())


def load_assessment(path: PathLike) -> LoocvResult:
    if not Path(path).is_file():
        raise ModelError(f"评估结果文件不存在: {path}", path=str(path))
    return LoocvResult.from_dict(read_json(path))
