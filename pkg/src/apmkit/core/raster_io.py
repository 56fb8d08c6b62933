"""栅格与站点表的读写、裁剪和背景点采样

栅格格式为 JSON 头文件 + 同名 .bin 数据体：
小端 32 位浮点，按波段顺序存放，每个波段按行主序展开。
"""

import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from scipy import ndimage

from .artifacts import write_bytes_atomic, write_csv, write_json
from .errors import BoundsError, PreconditionError, RasterFormatError, SiteTableError
from .models import MultiBandImage, RasterHeader, Site, SiteTable

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DTYPE_TAG = "f32le"
LAYOUT_TAG = "band_sequential_row_major"
SITE_COLUMNS = ["id", "x", "y", "label"]


def _header_and_payload_paths(path: PathLike):
    path = Path(path)
    if path.suffix == ".bin":
        return path.with_suffix(".json"), path
    header_path = path if path.suffix == ".json" else path.with_suffix(".json")
    return header_path, header_path.with_suffix(".bin")


def load_raster(path: PathLike) -> MultiBandImage:
    """读取栅格；等于 nodata_value 的像素标记为无效"""
    header_path, payload_path = _header_and_payload_paths(path)
    for p in (header_path, payload_path):
        if not p.is_file():
            raise RasterFormatError(f"文件不存在: {p}", path=str(p))

    with open(header_path, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as e:
            raise RasterFormatError(f"头文件不是合法 JSON: {e}", path=str(header_path))

    if raw.get("dtype", DTYPE_TAG) != DTYPE_TAG:
        raise RasterFormatError(f"不支持的数据类型: {raw.get('dtype')}")
    if raw.get("layout", LAYOUT_TAG) != LAYOUT_TAG:
        raise RasterFormatError(f"不支持的数据排列: {raw.get('layout')}")
    header = RasterHeader.from_dict(raw)

    expected = header.width * header.height * header.band_count
    payload = payload_path.read_bytes()
    if len(payload) != expected * 4:
        raise RasterFormatError(
            f"数据体大小不符: 期望 {expected} 个 float32 ({expected * 4} 字节)，"
            f"实际 {len(payload)} 字节",
            path=str(payload_path),
        )

    bands = (
        np.frombuffer(payload, dtype="<f4")
        .astype(np.float32)
        .reshape(header.band_count, header.height, header.width)
    )
    mask = np.all(bands != np.float32(header.nodata_value), axis=0)
    if not np.all(np.isfinite(bands[:, mask])):
        raise RasterFormatError("有效像素中存在 NaN/Inf", path=str(payload_path))

    logger.info(
        f"读取栅格 {header_path.name}: {header.width}x{header.height}, "
        f"{header.band_count} 个波段, 有效像素 {int(mask.sum())}"
    )
    return MultiBandImage(header=header, bands=bands, mask=mask)


def save_raster(img: MultiBandImage, path: PathLike) -> Path:
    """写出栅格；无效像素在所有波段写为 nodata_value"""
    header_path, payload_path = _header_and_payload_paths(path)
    data = np.array(img.bands, dtype="<f4", copy=True)
    data[:, ~img.mask] = np.float32(img.header.nodata_value)

    document = img.header.to_dict()
    document["dtype"] = DTYPE_TAG
    document["layout"] = LAYOUT_TAG
    write_bytes_atomic(payload_path, data.tobytes(order="C"))
    write_json(header_path, document)
    logger.info(f"写出栅格 {header_path}")
    return header_path


def crop(img: MultiBandImage, x0: int, y0: int, w: int, h: int) -> MultiBandImage:
    """裁剪窗口 [x0, x0+w) × [y0, y0+h)"""
    if w < 1 or h < 1 or x0 < 0 or y0 < 0 or x0 + w > img.width or y0 + h > img.height:
        raise BoundsError(
            f"裁剪窗口 (x0={x0}, y0={y0}, w={w}, h={h}) 越出影像 "
            f"{img.width}x{img.height}"
        )
    return MultiBandImage(
        header=img.header.with_bands(img.band_names, width=w, height=h),
        bands=np.ascontiguousarray(img.bands[:, y0 : y0 + h, x0 : x0 + w]),
        mask=np.ascontiguousarray(img.mask[y0 : y0 + h, x0 : x0 + w]),
    )


def load_sites(path: PathLike) -> SiteTable:
    """读取 `id,x,y,label` 格式的站点 CSV"""
    path = Path(path)
    if not path.is_file():
        raise SiteTableError(f"文件不存在: {path}", path=str(path))
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != SITE_COLUMNS:
        raise SiteTableError(
            f"站点表表头必须是 {','.join(SITE_COLUMNS)}，实际 {list(frame.columns)}"
        )

    sites = []
    for row_number, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            x, y, label = int(row.x), int(row.y), int(row.label)
        except ValueError as e:
            raise SiteTableError(
                f"第 {row_number} 行格式错误: {e}", row=row_number, site_id=row.id
            ) from e
        if not row.id:
            raise SiteTableError(f"第 {row_number} 行缺少 id", row=row_number)
        sites.append(Site(id=row.id, x=x, y=y, label=label))

    table = SiteTable(sites)
    logger.info(f"读取站点表 {path.name}: n1={table.n1}, n0={table.n0}")
    return table


def save_sites(table: SiteTable, path: PathLike) -> Path:
    frame = pd.DataFrame(table.to_records(), columns=SITE_COLUMNS)
    return write_csv(path, frame)


def sample_background(
    img: MultiBandImage,
    sites: SiteTable,
    n0: int,
    min_dist_m: float,
    seed: int,
    exclude_all_labels: bool = False,
    id_prefix: str = "bg",
) -> SiteTable:
    """在远离已知遗址的有效像素中均匀随机抽取 n0 个背景点

    距离为像素中心间的欧氏距离，按 pixel_size_m 换算为米。
    exclude_all_labels=True 时同时远离表中的所有点（含已调查的非遗址点）。
    """
    if n0 < 0:
        raise PreconditionError(f"n0 不能为负: {n0}")
    sites.check_bounds(img.width, img.height)

    anchors = [s for s in sites if exclude_all_labels or s.label == 1]
    # distance_transform_edt 计算每个像素到最近零值像素的距离
    not_anchor = np.ones((img.height, img.width), dtype=bool)
    for s in anchors:
        not_anchor[s.y, s.x] = False

    eligible = img.mask.copy()
    if anchors:
        distance_m = ndimage.distance_transform_edt(not_anchor) * img.header.pixel_size_m
        eligible &= not_anchor & (distance_m >= min_dist_m)
    for s in sites:
        eligible[s.y, s.x] = False

    candidates = np.flatnonzero(eligible.ravel())
    if len(candidates) < n0:
        raise PreconditionError(
            f"满足距离约束的有效像素只有 {len(candidates)} 个，少于 n0={n0}",
            eligible=int(len(candidates)),
            n0=n0,
        )

    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(candidates, size=n0, replace=False))
    ys, xs = np.unravel_index(chosen, (img.height, img.width))
    width = max(4, len(str(n0)))
    background = SiteTable(
        [
            Site(id=f"{id_prefix}-{i:0{width}d}", x=int(x), y=int(y), label=0)
            for i, (x, y) in enumerate(zip(xs, ys), start=1)
        ]
    )
    logger.info(
        f"背景点采样完成: n0={n0}, 最小距离 {min_dist_m} m, 候选像素 {len(candidates)}"
    )
    return background


def sample_at_sites(img: MultiBandImage, sites: SiteTable, band: Optional[str] = None) -> np.ndarray:
    """读取站点处的像素值（默认第一个波段）"""
    sites.check_bounds(img.width, img.height)
    values = img.band(band) if band else img.bands[0]
    coords = sites.coordinates
    invalid = [s.id for s in sites if not img.mask[s.y, s.x]]
    if invalid:
        raise BoundsError(f"站点位于无效像素上: {invalid}", site_ids=invalid)
    return values[coords[:, 1], coords[:, 0]].astype(float)
