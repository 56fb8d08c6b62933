"""波段组合与缨帽变换系数模型"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..errors import BandError, ConfigError
from .raster import KTT_BANDS, NDVI_BAND, SLOPE_BAND, WORLDVIEW2_BANDS


@dataclass(frozen=True)
class BandSet:
    """参与波段差比的源波段，顺序即配对枚举顺序"""

    name: str
    source_band_names: List[str] = field(default_factory=list)
    # True 时不做差比，直接透传源波段（恒等变换）
    identity: bool = False

    def __post_init__(self):
        if len(set(self.source_band_names)) != len(self.source_band_names):
            raise BandError(f"波段组合 {self.name} 中有重复波段")

    @property
    def output_band_count(self) -> int:
        n = len(self.source_band_names)
        return n if self.identity else n * (n - 1) // 2


# 不同维度的波段差比组合
BAND_CONFIGURATIONS = {
    "BDR15": BandSet(
        "BDR15", [SLOPE_BAND, "nir1", "red_edge", "brightness", "greenness", "wetness"]
    ),
    "BDR36": BandSet("BDR36", [SLOPE_BAND] + WORLDVIEW2_BANDS),
    "BDR45": BandSet("BDR45", [SLOPE_BAND] + WORLDVIEW2_BANDS + [NDVI_BAND]),
    "BDR66": BandSet(
        "BDR66", [SLOPE_BAND] + WORLDVIEW2_BANDS + ["brightness", "greenness", "wetness"]
    ),
    "BDR78": BandSet("BDR78", [SLOPE_BAND] + WORLDVIEW2_BANDS + KTT_BANDS),
    "IDENTITY9": BandSet("IDENTITY9", [SLOPE_BAND] + WORLDVIEW2_BANDS, identity=True),
}


@dataclass(frozen=True)
class KttCoefficients:
    """4 × 8 缨帽变换系数：行 = 亮度/绿度/湿度/第四分量，列 = WorldView-2 波段"""

    matrix: np.ndarray
    component_names: List[str] = field(default_factory=lambda: list(KTT_BANDS))

    def __post_init__(self):
        if self.matrix.shape != (4, 8):
            raise ConfigError(f"KTT 系数必须是 4×8，实际 {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise ConfigError("KTT 系数必须全部为有限值")
