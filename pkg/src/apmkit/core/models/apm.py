"""PCA / LDA / (k,l)-NN 模型与训练结果"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..errors import ModelError

MODEL_VERSION = "apmkit-model-v1"


@dataclass(frozen=True)
class PcaModel:
    """主成分模型 g: R^d̃ → R^d"""

    center: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    # 可选的逐列标准化尺度，None 表示只中心化
    scale: Optional[np.ndarray] = None
    total_variance: float = 0.0

    def __post_init__(self):
        if self.components.ndim != 2 or self.components.shape[1] != self.center.shape[0]:
            raise ModelError(
                f"PCA 主成分形状 {self.components.shape} 与中心向量长度 {self.center.shape[0]} 不一致"
            )
        if self.explained_variance.shape != (self.components.shape[0],):
            raise ModelError(
                f"解释方差长度 {self.explained_variance.shape} 与主成分个数 {self.components.shape[0]} 不一致"
            )
        gram = self.components @ self.components.T
        if not np.allclose(gram, np.eye(gram.shape[0]), atol=1e-8):
            raise ModelError("PCA 主成分的行不是标准正交的")

    @property
    def dimension(self) -> int:
        return int(self.components.shape[0])

    @property
    def input_dimension(self) -> int:
        return int(self.center.shape[0])

    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
            "total_variance": self.total_variance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PcaModel":
        scale = data.get("scale")
        center = np.asarray(data["center"], dtype=float)
        return cls(
            center=center,
            components=np.asarray(data["components"], dtype=float).reshape(
                -1, center.shape[0]
            ),
            explained_variance=np.asarray(data["explained_variance"], dtype=float),
            scale=None if scale is None else np.asarray(scale, dtype=float),
            total_variance=float(data.get("total_variance", 0.0)),
        )


@dataclass(frozen=True)
class LdaModel:
    """两类线性判别分析，协方差带收缩"""

    class_means: np.ndarray
    pooled_covariance: np.ndarray
    log_priors: np.ndarray
    shrinkage: float = 0.1

    def __post_init__(self):
        d = self.class_means.shape[-1]
        if self.class_means.shape != (2, d) or self.pooled_covariance.shape != (d, d):
            raise ModelError(
                f"LDA 参数形状不一致: 均值 {self.class_means.shape}, 协方差 {self.pooled_covariance.shape}"
            )
        if not np.allclose(self.pooled_covariance, self.pooled_covariance.T, atol=1e-10):
            raise ModelError("LDA 合并协方差矩阵不对称")
        if self.log_priors.shape != (2,) or not np.isclose(np.exp(self.log_priors).sum(), 1.0, atol=1e-9):
            raise ModelError(f"LDA 先验之和必须为 1: {np.exp(self.log_priors).tolist()}")

    @property
    def dimension(self) -> int:
        return int(self.class_means.shape[1])

    def to_dict(self) -> dict:
        return {
            "class_means": self.class_means.tolist(),
            "pooled_covariance": self.pooled_covariance.tolist(),
            "log_priors": self.log_priors.tolist(),
            "shrinkage": self.shrinkage,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LdaModel":
        return cls(
            class_means=np.asarray(data["class_means"], dtype=float),
            pooled_covariance=np.asarray(data["pooled_covariance"], dtype=float),
            log_priors=np.asarray(data["log_priors"], dtype=float),
            shrinkage=float(data["shrinkage"]),
        )


@dataclass(frozen=True)
class KnnModel:
    """(k,l) 近邻规则：训练特征（降维后）与标签"""

    features: np.ndarray
    labels: np.ndarray
    k: int
    l: int

    def __post_init__(self):
        n = len(self.labels)
        if not 1 <= self.l <= self.k <= n:
            raise ModelError(
                f"(k,l) 参数非法: 需要 1 ≤ l ≤ k ≤ n，实际 k={self.k}, l={self.l}, n={n}"
            )

    @property
    def dimension(self) -> int:
        return int(self.features.shape[1])

    def to_dict(self) -> dict:
        return {
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "k": self.k,
            "l": self.l,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnnModel":
        labels = np.asarray(data["labels"], dtype=int)
        return cls(
            features=np.asarray(data["features"], dtype=float).reshape(len(labels), -1),
            labels=labels,
            k=int(data["k"]),
            l=int(data["l"]),
        )


@dataclass(frozen=True)
class ConstantModel:
    """单一类别训练集上的退化分类器"""

    label: int
    dimension: int = 0

    def to_dict(self) -> dict:
        return {"label": self.label, "dimension": self.dimension}

    @classmethod
    def from_dict(cls, data: dict) -> "ConstantModel":
        return cls(label=int(data["label"]), dimension=int(data.get("dimension", 0)))


Classifier = Union[LdaModel, KnnModel, ConstantModel]

_CLASSIFIER_TAGS = {LdaModel: "lda", KnnModel: "knn", ConstantModel: "constant"}
_CLASSIFIER_TYPES = {tag: cls for cls, tag in _CLASSIFIER_TAGS.items()}


@dataclass(frozen=True)
class TrainedApm:
    """训练完成的增强型 APM：PCA(d*) + 分类器"""

    pca: PcaModel
    classifier: Classifier
    cv_record: List[float]
    d_star: int
    strategy: str = "error"
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.strategy == "error" and self.cv_record:
            best = min(self.cv_record)
            expected = self.cv_record.index(best) + 1
            if self.d_star != expected:
                raise ModelError(
                    f"d*={self.d_star} 不是 cv_record 的最小 argmin ({expected})"
                )

    @property
    def classifier_tag(self) -> str:
        return _CLASSIFIER_TAGS[type(self.classifier)]

    def to_dict(self) -> Dict[str, Any]:
        """转换为 JSON 文档"""
        return {
            "version": MODEL_VERSION,
            "classifier_tag": self.classifier_tag,
            "d_star": self.d_star,
            "strategy": self.strategy,
            "cv_record": list(self.cv_record),
            "pca": self.pca.to_dict(),
            "classifier": self.classifier.to_dict(),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainedApm":
        """从 JSON 文档创建实例"""
        if data.get("version") != MODEL_VERSION:
            raise ModelError(f"不支持的模型版本: {data.get('version')}")
        tag = data["classifier_tag"]
        if tag not in _CLASSIFIER_TYPES:
            raise ModelError(f"未知分类器类型: {tag}")
        return cls(
            pca=PcaModel.from_dict(data["pca"]),
            classifier=_CLASSIFIER_TYPES[tag].from_dict(data["classifier"]),
            cv_record=[float(v) for v in data["cv_record"]],
            d_star=int(data["d_star"]),
            strategy=str(data.get("strategy", "error")),
            warnings=list(data.get("warnings", [])),
        )


@dataclass
class LoocvResult:
    """嵌套留一交叉验证结果"""

    ids: List[str]
    labels: np.ndarray
    # 参与 ROC 的外层分数，形式见 outer_score
    scores: np.ndarray
    # 外层模型给出的后验概率（kNN 为 V/k）
    posteriors: np.ndarray
    # (k,l)-NN 的判决：1 / 0 / -1（拒判）；LDA 为 posterior > 0.5
    decisions: np.ndarray
    d_stars: np.ndarray
    cv_errors: List[List[float]]
    d_max: int
    outer_score: str = "pair_rank"
    warnings: List[str] = field(default_factory=list)

    @property
    def rejected(self) -> np.ndarray:
        return self.decisions == -1

    @property
    def rejection_rate(self) -> float:
        if len(self.decisions) == 0:
            return 0.0
        return float(np.mean(self.rejected))

    @property
    def outer_error(self) -> float:
        """外层 0/1 误判率（拒判计为误判）"""
        if len(self.labels) == 0:
            return 0.0
        return float(np.mean(self.decisions != self.labels))

    def d_star_histogram(self) -> Dict[str, int]:
        values, counts = np.unique(self.d_stars, return_counts=True)
        return {str(int(v)): int(c) for v, c in zip(values, counts)}

    def to_dict(self) -> Dict[str, Any]:
        """转换为 JSON 文档（浮点数按 repr 写出，可逐位读回）"""
        return {
            "ids": list(self.ids),
            "labels": self.labels.tolist(),
            "scores": self.scores.tolist(),
            "posteriors": self.posteriors.tolist(),
            "decisions": self.decisions.tolist(),
            "d_stars": self.d_stars.tolist(),
            "cv_errors": [list(map(float, row)) for row in self.cv_errors],
            "d_max": self.d_max,
            "outer_score": self.outer_score,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LoocvResult":
        return cls(
            ids=[str(i) for i in data["ids"]],
            labels=np.asarray(data["labels"], dtype=int),
            scores=np.asarray(data["scores"], dtype=float),
            posteriors=np.asarray(data["posteriors"], dtype=float),
            decisions=np.asarray(data["decisions"], dtype=int),
            d_stars=np.asarray(data["d_stars"], dtype=int),
            cv_errors=[[float(v) for v in row] for row in data["cv_errors"]],
            d_max=int(data["d_max"]),
            outer_score=str(data["outer_score"]),
            warnings=list(data.get("warnings", [])),
        )
