"""ROC 曲线与评分对模型"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..errors import PreconditionError

CONVENTIONAL_LEVELS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class RocCurve:
    """按阈值 τ 降序排列的工作点，首尾为 (0,0) 与 (1,1)"""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    n_positive: int = 0
    n_negative: int = 0

    def points(self) -> List[Dict[str, float]]:
        return [
            {"tau": float(t), "fpr": float(f), "tpr": float(p)}
            for t, f, p in zip(self.thresholds, self.fpr, self.tpr)
        ]

    def tnr_at_fnr(self, fnr: float) -> float:
        """在假阴性率不超过 fnr 的工作点中取最大的真阴性率"""
        eligible = self.tpr >= 1.0 - fnr - 1e-12
        return float(np.max(1.0 - self.fpr[eligible]))


@dataclass(frozen=True)
class ScorePair:
    """单个站点的传统评分、增强评分与标签"""

    id: str
    conventional: float
    enhanced: float
    label: int


@dataclass
class ScoreTable:
    """按站点 id 对齐的评分对"""

    pairs: List[ScorePair] = field(default_factory=list)

    def __post_init__(self):
        ids = [p.id for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise PreconditionError("评分表中站点 id 重复")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def ids(self) -> List[str]:
        return [p.id for p in self.pairs]

    @property
    def conventional(self) -> np.ndarray:
        return np.array([p.conventional for p in self.pairs], dtype=float)

    @property
    def enhanced(self) -> np.ndarray:
        return np.array([p.enhanced for p in self.pairs], dtype=float)

    @property
    def labels(self) -> np.ndarray:
        return np.array([p.label for p in self.pairs], dtype=int)

    def on_conventional_grid(self, atol: float = 1e-9) -> bool:
        """传统评分是否全部落在六级网格上"""
        levels = np.asarray(CONVENTIONAL_LEVELS)
        conv = self.conventional
        return bool(
            np.all(np.min(np.abs(conv[:, None] - levels[None, :]), axis=1) <= atol)
        )

    def subset(self, keep: np.ndarray) -> "ScoreTable":
        return ScoreTable([p for p, k in zip(self.pairs, keep) if k])

    @classmethod
    def from_arrays(
        cls,
        ids: List[str],
        conventional: np.ndarray,
        enhanced: np.ndarray,
        labels: np.ndarray,
    ) -> "ScoreTable":
        return cls(
            [
                ScorePair(str(i), float(c), float(e), int(y))
                for i, c, e, y in zip(ids, conventional, enhanced, labels)
            ]
        )


@dataclass(frozen=True)
class GammaSelection:
    """γ 网格上的 AUC 曲线与最优 γ*"""

    gamma_star: float
    grid: np.ndarray
    aucs: np.ndarray

    @property
    def auc_star(self) -> float:
        return float(self.aucs[int(np.flatnonzero(self.grid == self.gamma_star)[0])])

    def auc_at(self, gamma: float) -> Optional[float]:
        hits = np.flatnonzero(np.isclose(self.grid, gamma))
        return float(self.aucs[hits[0]]) if len(hits) else None
