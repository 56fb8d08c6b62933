"""波段变换 D：波段差比、NDVI 与缨帽 (KTT) 变换"""

import logging
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import BandError, ConfigError
from .models import (
    BAND_CONFIGURATIONS,
    KTT_BANDS,
    NDVI_BAND,
    WORLDVIEW2_BANDS,
    BandSet,
    KttCoefficients,
    MultiBandImage,
)

logger = logging.getLogger(__name__)

DEFAULT_KTT_FILE = "ktt_coefficients.csv"


def band_pairs(names: Sequence[str]) -> List[Tuple[str, str]]:
    """规范配对顺序：(j, i) 且 j < i，按字典序枚举"""
    return [(names[j], names[i]) for j, i in combinations(range(len(names)), 2)]


def _normalized_difference(
    upper: np.ndarray, lower: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """(upper - lower) / (upper + lower)，返回值与分母非零掩膜"""
    a = upper.astype(np.float64)
    b = lower.astype(np.float64)
    denominator = a + b
    nonzero = denominator != 0
    ratio = np.zeros_like(denominator)
    np.divide(a - b, denominator, out=ratio, where=nonzero)
    return ratio, nonzero


def band_difference_ratios(
    img: MultiBandImage, band_set: BandSet, include_identity: bool = False
) -> MultiBandImage:
    """对所选波段的全部配对计算差比 (B_i - B_j) / (B_i + B_j)

    任一配对分母为 0 的像素在所有输出波段上标记为无效。
    include_identity=True 时在差比之后追加源波段本身。
    """
    source = img.select(band_set.source_band_names)
    if band_set.identity:
        logger.info(f"波段组合 {band_set.name}: 恒等变换, {source.header.band_count} 个波段")
        return source

    names = band_set.source_band_names
    if len(names) < 2:
        raise BandError(
            f"波段差比至少需要 2 个波段，{band_set.name} 只有 {len(names)} 个",
            band_set=band_set.name,
        )

    index = {name: k for k, name in enumerate(names)}
    pairs = band_pairs(names)
    out = np.empty((len(pairs), img.height, img.width), dtype=np.float32)
    mask = source.mask.copy()
    for k, (name_j, name_i) in enumerate(pairs):
        ratio, nonzero = _normalized_difference(
            source.bands[index[name_i]], source.bands[index[name_j]]
        )
        out[k] = ratio
        mask &= nonzero

    out_names = [f"{name_i}-{name_j}" for name_j, name_i in pairs]
    result = MultiBandImage.create(
        out,
        out_names,
        mask=mask,
        nodata_value=img.header.nodata_value,
        pixel_size_m=img.header.pixel_size_m,
    )
    logger.info(
        f"波段组合 {band_set.name}: {len(names)} 个源波段 → {len(pairs)} 个差比波段, "
        f"有效像素 {result.valid_count()}"
    )
    if include_identity:
        result = result.stack(source)
    return result


def ndvi(
    img: MultiBandImage,
    nir_band: str = "nir1",
    red_band: str = "red",
    append: bool = False,
) -> MultiBandImage:
    """归一化植被指数 (NIR - Red) / (NIR + Red)"""
    for name in (nir_band, red_band):
        if name not in img.band_names:
            raise BandError(f"NDVI 需要波段 {name}", band=name)
    ratio, nonzero = _normalized_difference(img.band(nir_band), img.band(red_band))
    index = MultiBandImage.create(
        ratio,
        [NDVI_BAND],
        mask=img.mask & nonzero,
        nodata_value=img.header.nodata_value,
        pixel_size_m=img.header.pixel_size_m,
    )
    return img.stack(index) if append else index


def load_ktt_coefficients(path: Optional[Union[str, Path]] = None) -> KttCoefficients:
    """读取 4×8 系数 CSV（表头为 8 个 WorldView-2 波段名）；默认使用包内文件"""
    if path is None:
        source = resources.files("apmkit.data").joinpath(DEFAULT_KTT_FILE)
        with source.open("r", encoding="utf-8") as handle:
            frame = pd.read_csv(handle, comment="#")
    else:
        if not Path(path).is_file():
            raise ConfigError(f"KTT 系数文件不存在: {path}", path=str(path))
        frame = pd.read_csv(path, comment="#")
    try:
        matrix = frame.to_numpy(dtype=float)
    except ValueError as e:
        raise ConfigError(f"KTT 系数文件包含非数值: {e}") from e
    return KttCoefficients(matrix=matrix)


def tasseled_cap(
    img: MultiBandImage,
    coeffs: KttCoefficients,
    spectral_bands: Sequence[str] = tuple(WORLDVIEW2_BANDS),
    append: bool = False,
) -> MultiBandImage:
    """缨帽变换：每个像素的 8 维光谱向量左乘 4×8 系数矩阵"""
    if len(spectral_bands) != 8:
        raise BandError(f"缨帽变换需要 8 个光谱波段，实际 {len(spectral_bands)} 个")
    spectral = img.select(list(spectral_bands))
    flat = spectral.bands.reshape(8, -1).astype(np.float64)
    components = (coeffs.matrix @ flat).reshape(4, img.height, img.width)
    ktt = MultiBandImage.create(
        components,
        coeffs.component_names,
        mask=img.mask,
        nodata_value=img.header.nodata_value,
        pixel_size_m=img.header.pixel_size_m,
    )
    return img.stack(ktt) if append else ktt


def ensure_derived_bands(
    img: MultiBandImage,
    required: Sequence[str],
    coeffs: Optional[KttCoefficients] = None,
) -> MultiBandImage:
    """按需补齐 KTT 与 NDVI 派生波段"""
    present = set(img.band_names)
    if any(name in KTT_BANDS and name not in present for name in required):
        if not set(WORLDVIEW2_BANDS) <= present:
            missing = sorted(set(WORLDVIEW2_BANDS) - present)
            raise BandError(f"计算 KTT 波段缺少光谱波段: {missing}", missing=missing)
        ktt = tasseled_cap(img, coeffs or load_ktt_coefficients())
        img = img.stack(ktt.select([n for n in KTT_BANDS if n not in present]))
        logger.info("已派生 KTT 波段")
    if NDVI_BAND in required and NDVI_BAND not in present:
        img = ndvi(img, append=True)
        logger.info("已派生 NDVI 波段")
    return img


def build_band_configuration(
    img: MultiBandImage,
    config_name: str,
    coeffs: Optional[KttCoefficients] = None,
) -> MultiBandImage:
    """按命名组合 (BDR15/BDR36/BDR45/BDR66/BDR78/IDENTITY9) 构造变换后影像"""
    if config_name not in BAND_CONFIGURATIONS:
        raise ConfigError(
            f"未知波段组合 {config_name}，可选: {sorted(BAND_CONFIGURATIONS)}",
            band_configuration=config_name,
        )
    band_set = BAND_CONFIGURATIONS[config_name]
    required = band_set.source_band_names
    base_missing = [
        name
        for name in required
        if name not in img.band_names and name not in KTT_BANDS and name != NDVI_BAND
    ]
    if base_missing:
        raise BandError(
            f"波段组合 {config_name} 缺少前置波段: {base_missing}",
            band_set=config_name,
            missing=base_missing,
        )
    img = ensure_derived_bands(img, required, coeffs)
    return band_difference_ratios(img, band_set)
