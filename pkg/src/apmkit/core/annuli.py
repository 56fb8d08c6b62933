"""图像处理器 f：以站点为中心的同心环带中位数与 MAD 特征"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

from .artifacts import write_csv
from .errors import AnnulusEmptyError, ConfigError
from .models import (
    AnnulusOffsets,
    FeatureMatrix,
    MultiBandImage,
    RadiiTable,
    SiteTable,
    feature_column_labels,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def annulus_offsets(table: RadiiTable) -> AnnulusOffsets:
    """枚举每个环带内满足 r_in ≤ ‖(dx,dy)‖ < r_out 的整数偏移（行优先）"""
    reach = int(np.ceil(table.max_radius))
    grid = np.arange(-reach, reach + 1)
    dy, dx = np.meshgrid(grid, grid, indexing="ij")
    dx = dx.ravel()
    dy = dy.ravel()
    norm2 = dx * dx + dy * dy

    offsets: List[np.ndarray] = []
    for r_in, r_out in table.entries:
        keep = (norm2 >= r_in * r_in) & (norm2 < r_out * r_out)
        offsets.append(np.stack([dx[keep], dy[keep]], axis=1))
    return AnnulusOffsets(table=table, offsets=offsets)


def site_features(
    img: MultiBandImage, s: Tuple[int, int], offsets: AnnulusOffsets
) -> np.ndarray:
    """单个站点的 2·N·B 维特征：每个波段先 N 个中位数，再 N 个 MAD

    环带像素限定在影像范围内且掩膜有效；MAD 不乘一致性系数。
    """
    x, y = int(s[0]), int(s[1])
    n_annuli = len(offsets)
    out = np.empty((img.header.band_count, 2, n_annuli), dtype=np.float64)

    for i, off in enumerate(offsets.offsets):
        xs = x + off[:, 0]
        ys = y + off[:, 1]
        inside = (xs >= 0) & (xs < img.width) & (ys >= 0) & (ys < img.height)
        xs, ys = xs[inside], ys[inside]
        valid = img.mask[ys, xs]
        xs, ys = xs[valid], ys[valid]
        if len(xs) == 0:
            raise AnnulusEmptyError(i + 1)

        values = img.bands[:, ys, xs].astype(np.float64)
        out[:, 0, i] = np.median(values, axis=1)
        out[:, 1, i] = stats.median_abs_deviation(values, axis=1, scale=1.0)

    return out.reshape(-1)


def extract_features(
    img: MultiBandImage,
    sites: SiteTable,
    table: Optional[RadiiTable] = None,
    n_jobs: int = 1,
) -> FeatureMatrix:
    """对站点表逐行提取特征，行顺序与输入一致"""
    table = table or RadiiTable.default()
    sites.check_bounds(img.width, img.height)
    offsets = annulus_offsets(table)
    if len(sites) == 0:
        return FeatureMatrix.empty(img.band_names, len(table))

    def _one(site) -> np.ndarray:
        try:
            return site_features(img, (site.x, site.y), offsets)
        except AnnulusEmptyError as e:
            raise AnnulusEmptyError(e.annulus_index, site.id) from e

    if n_jobs == 1:
        rows = [_one(site) for site in sites]
    else:
        rows = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_one)(site) for site in sites
        )

    matrix = FeatureMatrix(
        ids=sites.ids,
        labels=sites.labels,
        values=np.vstack(rows),
        columns=feature_column_labels(img.band_names, len(table)),
        band_names=img.band_names,
        n_annuli=len(table),
    )
    logger.info(
        f"特征提取完成: {matrix.n} 个站点, d̃={matrix.dimension} "
        f"({img.header.band_count} 个波段 × {2 * len(table)} 个统计量)"
    )
    return matrix


def load_radii_table(path: PathLike) -> RadiiTable:
    """读取 `index,r_in,r_out` 格式的半径表"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"半径表文件不存在: {path}", path=str(path))
    frame = pd.read_csv(path)
    if list(frame.columns) != ["index", "r_in", "r_out"]:
        raise ConfigError(f"半径表表头必须是 index,r_in,r_out，实际 {list(frame.columns)}")
    frame = frame.sort_values("index")
    if list(frame["index"]) != list(range(1, len(frame) + 1)):
        raise ConfigError("半径表 index 必须从 1 连续编号")
    entries = [(int(a), int(b)) for a, b in zip(frame["r_in"], frame["r_out"])]
    return RadiiTable(entries=entries)


def save_features(matrix: FeatureMatrix, path: PathLike) -> Path:
    """导出特征 CSV：id,label,<波段:统计量:环带序号>..."""
    frame = pd.DataFrame(matrix.values, columns=matrix.columns)
    frame.insert(0, "label", matrix.labels)
    frame.insert(0, "id", matrix.ids)
    return write_csv(path, frame)


def load_features(path: PathLike) -> FeatureMatrix:
    """读取 save_features 写出的特征 CSV"""
    frame = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
    if list(frame.columns[:2]) != ["id", "label"]:
        raise ConfigError(f"特征文件前两列必须是 id,label: {path}")
    columns = [str(c) for c in frame.columns[2:]]
    band_names, n_annuli = FeatureMatrix.band_names_from_columns(columns)
    return FeatureMatrix(
        ids=frame["id"].tolist(),
        labels=frame["label"].to_numpy(dtype=int),
        values=frame[columns].to_numpy(dtype=np.float64),
        columns=columns,
        band_names=band_names,
        n_annuli=n_annuli or 0,
    )
