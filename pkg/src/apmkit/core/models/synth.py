"""合成数据配置模型"""

from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from ..errors import ConfigError
from .raster import SLOPE_BAND, WORLDVIEW2_BANDS


def _default_band_names() -> List[str]:
    return [SLOPE_BAND] + list(WORLDVIEW2_BANDS)


@dataclass
class SynthConfig:
    """合成条带配置"""

    width: int = 640
    height: int = 640
    band_names: List[str] = field(default_factory=_default_band_names)
    n_sites: int = 37
    # 站点核心与外环半径（像素）
    site_core_radius: float = 4.0
    site_ring_radius: float = 10.0
    # 每个波段的加性偏移；None 时按波段基准值与交替符号自动生成
    core_contrast: Optional[List[float]] = None
    ring_contrast: Optional[List[float]] = None
    # 每个波段的基准亮度；None 时坡度取 12，光谱波段取 0.20~0.41
    band_levels: Optional[List[float]] = None
    noise_sigma: float = 0.02
    background_texture_scale: float = 12.0
    # 平滑纹理场的标准差，以 noise_sigma 为单位
    background_texture_ratio: float = 2.5
    min_site_separation: float = 40.0
    pixel_size_m: float = 2.0
    seed: int = 0
    max_placement_attempts: int = 10000

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("合成影像尺寸必须为正")
        if not self.band_names:
            raise ConfigError("至少需要一个波段")
        if self.n_sites < 0:
            raise ConfigError("n_sites 不能为负")
        if not 0 <= self.site_core_radius < self.site_ring_radius:
            raise ConfigError(
                f"需要 0 ≤ site_core_radius < site_ring_radius，实际 "
                f"{self.site_core_radius}, {self.site_ring_radius}"
            )
        if self.noise_sigma < 0 or self.background_texture_ratio < 0:
            raise ConfigError("噪声与纹理幅度不能为负")
        for name in ("core_contrast", "ring_contrast", "band_levels"):
            values = getattr(self, name)
            if values is None:
                continue
            if len(values) != self.band_count:
                raise ConfigError(f"{name} 长度必须等于波段数 {self.band_count}")
            if not np.all(np.isfinite(values)):
                raise ConfigError(f"{name} 必须全部为有限值")

    @property
    def band_count(self) -> int:
        return len(self.band_names)

    def levels(self) -> np.ndarray:
        """每个波段的基准亮度"""
        if self.band_levels is not None:
            return np.asarray(self.band_levels, dtype=float)
        spectral = iter(np.linspace(0.20, 0.41, max(self.band_count, 2)))
        return np.array(
            [12.0 if name == SLOPE_BAND else next(spectral) for name in self.band_names]
        )

    def signs(self) -> np.ndarray:
        """交替的对比度符号，使信号体现在波段比值而非绝对亮度上"""
        return np.array([1.0 if b % 2 == 0 else -1.0 for b in range(self.band_count)])

    def core_offsets(self) -> np.ndarray:
        if self.core_contrast is not None:
            return np.asarray(self.core_contrast, dtype=float)
        return 0.25 * self.signs() * self.levels()

    def ring_offsets(self) -> np.ndarray:
        if self.ring_contrast is not None:
            return np.asarray(self.ring_contrast, dtype=float)
        return -0.12 * self.signs() * self.levels()

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        """从字典创建实例，拒绝未知字段"""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"SynthConfig 未知字段: {unknown}", keys=unknown)
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
