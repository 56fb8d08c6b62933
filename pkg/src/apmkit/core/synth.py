"""合成条带生成器：在平滑背景上植入同心异常站点"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import PreconditionError, SynthError
from .models import CONVENTIONAL_LEVELS, MultiBandImage, Site, SiteTable, SynthConfig
from .raster_io import sample_background

logger = logging.getLogger(__name__)

CONVENTIONAL_BAND = "conventional"


def _smooth_field(rng: np.random.Generator, shape: Tuple[int, int], scale: float) -> np.ndarray:
    """单位标准差的平滑随机场"""
    field = rng.standard_normal(shape)
    if scale > 0:
        field = ndimage.gaussian_filter(field, sigma=scale, mode="reflect")
    std = field.std()
    return field / std if std > 0 else field


def _place_sites(cfg: SynthConfig, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """拒绝采样放置站点中心，保证彼此间距与外环不越界"""
    margin = int(np.ceil(cfg.site_ring_radius))
    if cfg.n_sites and (cfg.width <= 2 * margin or cfg.height <= 2 * margin):
        raise SynthError(
            f"影像 {cfg.width}×{cfg.height} 放不下外环半径 {cfg.site_ring_radius} 的站点"
        )
    centers: List[Tuple[int, int]] = []
    attempts = 0
    min_d2 = cfg.min_site_separation**2
    while len(centers) < cfg.n_sites:
        if attempts >= cfg.max_placement_attempts:
            raise SynthError(
                f"{attempts} 次尝试后只放置了 {len(centers)}/{cfg.n_sites} 个站点",
                placed=len(centers),
                n_sites=cfg.n_sites,
            )
        attempts += 1
        x = int(rng.integers(margin, cfg.width - margin))
        y = int(rng.integers(margin, cfg.height - margin))
        if all((x - cx) ** 2 + (y - cy) ** 2 >= min_d2 for cx, cy in centers):
            centers.append((x, y))
    return centers


def _plant(bands: np.ndarray, cfg: SynthConfig, centers: List[Tuple[int, int]]) -> None:
    """在核心圆盘与外环内叠加逐波段偏移"""
    core = cfg.core_offsets()[:, None]
    ring = cfg.ring_offsets()[:, None]
    reach = int(np.ceil(cfg.site_ring_radius))
    for x, y in centers:
        x0, x1 = max(0, x - reach), min(cfg.width, x + reach + 1)
        y0, y1 = max(0, y - reach), min(cfg.height, y + reach + 1)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        r2 = (xx - x) ** 2 + (yy - y) ** 2
        in_core = r2 < cfg.site_core_radius**2
        in_ring = ~in_core & (r2 < cfg.site_ring_radius**2)
        window = bands[:, y0:y1, x0:x1]
        window[:, in_core] += core
        window[:, in_ring] += ring


def generate_swath(cfg: SynthConfig) -> Tuple[MultiBandImage, SiteTable]:
    """生成一幅合成条带与植入的遗址表（标签全为 1）

    背景 = 基准亮度 × (1 + 平滑纹理) + 白噪声，纹理与噪声都按波段基准亮度缩放；
    纹理在各波段间共享，因此在波段差比中大部分被抵消。
    """
    rng = np.random.default_rng(cfg.seed)
    shape = (cfg.height, cfg.width)
    levels = cfg.levels()[:, None, None]

    texture = _smooth_field(rng, shape, cfg.background_texture_scale)
    texture_std = cfg.background_texture_ratio * cfg.noise_sigma
    bands = levels * (1.0 + texture_std * texture[None, :, :])

    centers = _place_sites(cfg, rng)
    _plant(bands, cfg, centers)

    if cfg.noise_sigma > 0:
        bands += rng.standard_normal(bands.shape) * cfg.noise_sigma * levels
    # 反射率与坡度都不能为负
    np.clip(bands, 0.0, None, out=bands)

    img = MultiBandImage.create(
        bands.astype(np.float32), cfg.band_names, pixel_size_m=cfg.pixel_size_m
    )
    width = max(3, len(str(cfg.n_sites)))
    sites = SiteTable(
        [
            Site(id=f"site-{i:0{width}d}", x=x, y=y, label=1)
            for i, (x, y) in enumerate(centers, start=1)
        ]
    )
    logger.info(
        f"合成条带生成完成: {cfg.width}×{cfg.height}, {cfg.band_count} 个波段, "
        f"{len(sites)} 个站点, seed={cfg.seed}"
    )
    return img, sites


def generate_labeled_dataset(
    cfg: SynthConfig, n_background: int
) -> Tuple[MultiBandImage, SiteTable]:
    """植入站点 (label 1) 加 n_background 个背景点 (label 0)

    背景点与站点的最小距离为外环半径的 4 倍。
    """
    img, sites = generate_swath(cfg)
    min_dist_m = cfg.site_ring_radius * 4 * cfg.pixel_size_m
    try:
        background = sample_background(img, sites, n_background, min_dist_m, cfg.seed)
    except PreconditionError as e:
        raise SynthError(f"背景点采样失败: {e}", n_background=n_background) from e
    table = sites.merge(background)
    if not table.has_both_classes():
        logger.warning(f"合成数据集只有单一类别 (n1={table.n1}, n0={table.n0})，无法用于 ROC")
    return img, table


def generate_conventional_raster(
    cfg: SynthConfig,
    sites: SiteTable,
    informativeness: float = 0.5,
    seed: Optional[int] = None,
) -> MultiBandImage:
    """模拟区域型传统 APM：平滑随机场与站点邻近度混合后按分位数量化为六级

    informativeness ∈ [0,1] 控制邻近度所占权重；0 表示与站点无关。
    """
    if not 0.0 <= informativeness <= 1.0:
        raise SynthError(f"informativeness 必须在 [0,1] 内: {informativeness}")
    rng = np.random.default_rng(cfg.seed + 1 if seed is None else seed)
    shape = (cfg.height, cfg.width)
    # 区域尺度远大于单个站点
    field = _smooth_field(rng, shape, 4.0 * cfg.background_texture_scale)

    proximity = np.zeros(shape)
    positives = [s for s in sites if s.label == 1]
    if positives:
        seeds = np.ones(shape, dtype=bool)
        for s in positives:
            seeds[s.y, s.x] = False
        distance = ndimage.distance_transform_edt(seeds)
        proximity = np.exp(-((distance / (6.0 * cfg.site_ring_radius)) ** 2))
        std = proximity.std()
        proximity = (proximity - proximity.mean()) / std if std > 0 else proximity

    mixed = (1.0 - informativeness) * field + informativeness * proximity
    ranks = np.argsort(np.argsort(mixed, axis=None, kind="stable"), kind="stable")
    n_levels = len(CONVENTIONAL_LEVELS)
    index = np.minimum(ranks * n_levels // ranks.size, n_levels - 1).reshape(shape)
    values = np.asarray(CONVENTIONAL_LEVELS, dtype=np.float32)[index]
    return MultiBandImage.create(values, [CONVENTIONAL_BAND], pixel_size_m=cfg.pixel_size_m)
