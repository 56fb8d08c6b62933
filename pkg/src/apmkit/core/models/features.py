"""环带特征相关模型"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ApmKitError, ConfigError

STATISTICS = ("median", "mad")


def _default_entries() -> List[Tuple[int, int]]:
    entries: List[Tuple[int, int]] = []
    # 三组半径：步长 3/5/7，环宽 2/4/6，每组 10 个
    for step, width in ((3, 2), (5, 4), (7, 6)):
        for i in range(10):
            entries.append((step * i, step * i + width))
    return entries


@dataclass(frozen=True)
class RadiiTable:
    """(内半径, 外半径) 条目，单位为像素；默认 30 项

    条目按组排列：每组从内半径 0 起，组内区间递增且互不重叠，
    不同组之间允许重叠。自定义表可以少于 30 项（d̃ 随之变化）。
    """

    entries: List[Tuple[int, int]] = field(default_factory=_default_entries)

    def __post_init__(self):
        if not self.entries:
            raise ConfigError("半径表不能为空")
        previous: Optional[Tuple[int, int]] = None
        for index, (r_in, r_out) in enumerate(self.entries, start=1):
            if int(r_in) != r_in or int(r_out) != r_out:
                raise ConfigError(f"半径表第 {index} 项必须是整数像素: ({r_in}, {r_out})", index=index)
            if r_in < 0 or r_in >= r_out:
                raise ConfigError(
                    f"半径表第 {index} 项非法: r_in={r_in}, r_out={r_out}",
                    index=index,
                )
            # r_in == 0 开启新的一组
            if previous is not None and r_in != 0 and r_in < previous[1]:
                raise ConfigError(
                    f"半径表第 {index} 项与上一项重叠: ({r_in}, {r_out}) 起点小于 {previous[1]}",
                    index=index,
                )
            previous = (r_in, r_out)
        if len(set(self.entries)) != len(self.entries):
            raise ConfigError("半径表存在重复条目")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def max_radius(self) -> int:
        return max(r_out for _, r_out in self.entries)

    @classmethod
    def default(cls) -> "RadiiTable":
        return cls()


@dataclass(frozen=True)
class AnnulusOffsets:
    """每个半径条目对应的整数像素偏移 (dx, dy)"""

    table: RadiiTable
    offsets: List[np.ndarray]

    def __len__(self) -> int:
        return len(self.offsets)


def feature_column_labels(band_names: Sequence[str], n_annuli: int) -> List[str]:
    """列标签：波段顺序 → 每个波段先 30 个中位数再 30 个 MAD"""
    labels: List[str] = []
    for band in band_names:
        for stat in STATISTICS:
            for i in range(1, n_annuli + 1):
                labels.append(f"{band}:{stat}:{i:02d}")
    return labels


@dataclass(frozen=True)
class FeatureMatrix:
    """n × d̃ 特征矩阵，d̃ = 2 · 环带数 · B"""

    ids: List[str]
    labels: np.ndarray
    values: np.ndarray
    columns: List[str]
    band_names: List[str] = field(default_factory=list)
    n_annuli: int = 30

    def __post_init__(self):
        n = len(self.ids)
        if self.values.shape != (n, len(self.columns)):
            raise ApmKitError(
                f"特征矩阵形状 {self.values.shape} 与行/列标签 {(n, len(self.columns))} 不一致"
            )
        if self.labels.shape != (n,):
            raise ApmKitError("标签数量与行数不一致")
        if not np.all(np.isfinite(self.values)):
            raise ApmKitError("特征矩阵包含非有限值")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dimension(self) -> int:
        return len(self.columns)

    def subset(self, rows: Sequence[int]) -> "FeatureMatrix":
        rows = list(rows)
        return FeatureMatrix(
            ids=[self.ids[i] for i in rows],
            labels=self.labels[rows],
            values=self.values[rows],
            columns=list(self.columns),
            band_names=list(self.band_names),
            n_annuli=self.n_annuli,
        )

    @classmethod
    def empty(cls, band_names: Sequence[str], n_annuli: int) -> "FeatureMatrix":
        columns = feature_column_labels(band_names, n_annuli)
        return cls(
            ids=[],
            labels=np.zeros(0, dtype=int),
            values=np.zeros((0, len(columns))),
            columns=columns,
            band_names=list(band_names),
            n_annuli=n_annuli,
        )

    @staticmethod
    def band_names_from_columns(columns: Sequence[str]) -> Tuple[List[str], Optional[int]]:
        """由列标签还原波段顺序与环带数"""
        bands: List[str] = []
        n_annuli = 0
        for column in columns:
            band, stat, index = column.rsplit(":", 2)
            if band not in bands:
                bands.append(band)
            if stat == "median":
                n_annuli = max(n_annuli, int(index))
        return bands, (n_annuli or None)
