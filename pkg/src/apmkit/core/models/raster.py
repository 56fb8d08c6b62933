"""栅格与站点表模型"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import BandError, BoundsError, RasterFormatError, SiteTableError

# WorldView-2 光谱波段，按中心波长排序（海岸蓝 → 近红外2）
WORLDVIEW2_BANDS: List[str] = [
    "coastal_blue",
    "blue",
    "green",
    "yellow",
    "red",
    "red_edge",
    "nir1",
    "nir2",
]

# 波段边缘与中心波长 (nm)
WORLDVIEW2_WAVELENGTHS: Dict[str, Dict[str, int]] = {
    "coastal_blue": {"lower": 396, "upper": 458, "center": 427},
    "blue": {"lower": 442, "upper": 515, "center": 478},
    "green": {"lower": 506, "upper": 586, "center": 546},
    "yellow": {"lower": 584, "upper": 632, "center": 608},
    "red": {"lower": 624, "upper": 694, "center": 659},
    "red_edge": {"lower": 699, "upper": 749, "center": 724},
    "nir1": {"lower": 765, "upper": 901, "center": 833},
    "nir2": {"lower": 856, "upper": 1043, "center": 949},
}

SLOPE_BAND = "slope"
KTT_BANDS: List[str] = ["brightness", "greenness", "wetness", "ktt4"]
NDVI_BAND = "ndvi"


@dataclass(frozen=True)
class RasterHeader:
    """栅格头信息"""

    width: int
    height: int
    band_count: int
    band_names: List[str]
    nodata_value: float = -9999.0
    # 地面分辨率（米/像素）
    pixel_size_m: float = 2.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.band_count < 1:
            raise RasterFormatError(
                f"非法尺寸: width={self.width}, height={self.height}, "
                f"band_count={self.band_count}"
            )
        if len(self.band_names) != self.band_count:
            raise RasterFormatError(
                f"band_names 数量 {len(self.band_names)} 与 band_count {self.band_count} 不一致"
            )
        if len(set(self.band_names)) != len(self.band_names):
            raise RasterFormatError(f"波段名称重复: {self.band_names}")
        if not np.isfinite(self.nodata_value):
            raise RasterFormatError("nodata_value 必须是有限数值")
        if self.pixel_size_m <= 0:
            raise RasterFormatError(f"pixel_size_m 必须为正: {self.pixel_size_m}")

    def with_bands(self, band_names: Sequence[str], **changes) -> "RasterHeader":
        """复制头信息并替换波段列表"""
        return RasterHeader(
            width=changes.get("width", self.width),
            height=changes.get("height", self.height),
            band_count=len(band_names),
            band_names=list(band_names),
            nodata_value=self.nodata_value,
            pixel_size_m=self.pixel_size_m,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "RasterHeader":
        """从字典创建实例"""
        try:
            return cls(
                width=int(data["width"]),
                height=int(data["height"]),
                band_count=int(data["band_count"]),
                band_names=[str(name) for name in data["band_names"]],
                nodata_value=float(data.get("nodata_value", -9999.0)),
                pixel_size_m=float(data.get("pixel_size_m", 2.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise RasterFormatError(f"头信息字段缺失或类型错误: {e}") from e

    def to_dict(self) -> dict:
        """转换为字典格式"""
        return {
            "width": self.width,
            "height": self.height,
            "band_count": self.band_count,
            "band_names": list(self.band_names),
            "nodata_value": self.nodata_value,
            "pixel_size_m": self.pixel_size_m,
        }


@dataclass(frozen=True)
class MultiBandImage:
    """共享有效性掩膜的多波段影像

    bands 形状为 (band_count, height, width)，float32；
    mask 形状为 (height, width)，True 表示有效像素。
    """

    header: RasterHeader
    bands: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        h = self.header
        if self.bands.shape != (h.band_count, h.height, h.width):
            raise RasterFormatError(
                f"波段数组形状 {self.bands.shape} 与头信息 "
                f"{(h.band_count, h.height, h.width)} 不一致"
            )
        if self.mask.shape != (h.height, h.width) or self.mask.dtype != bool:
            raise RasterFormatError("mask 必须是 (height, width) 的布尔数组")
        if not np.all(np.isfinite(self.bands[:, self.mask])):
            raise RasterFormatError("有效像素中存在 NaN/Inf")
        self.bands.setflags(write=False)
        self.mask.setflags(write=False)

    @classmethod
    def create(
        cls,
        bands: np.ndarray,
        band_names: Sequence[str],
        mask: Optional[np.ndarray] = None,
        nodata_value: float = -9999.0,
        pixel_size_m: float = 2.0,
    ) -> "MultiBandImage":
        """由数组创建影像；掩膜外像素统一写为 nodata_value"""
        data = np.array(bands, dtype=np.float32, copy=True)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3:
            raise RasterFormatError(f"波段数组必须是 2 维或 3 维: ndim={data.ndim}")
        valid = (
            np.ones(data.shape[1:], dtype=bool)
            if mask is None
            else np.array(mask, dtype=bool, copy=True)
        )
        data[:, ~valid] = np.float32(nodata_value)
        header = RasterHeader(
            width=data.shape[2],
            height=data.shape[1],
            band_count=data.shape[0],
            band_names=list(band_names),
            nodata_value=float(nodata_value),
            pixel_size_m=float(pixel_size_m),
        )
        return cls(header=header, bands=data, mask=valid)

    @property
    def width(self) -> int:
        return self.header.width

    @property
    def height(self) -> int:
        return self.header.height

    @property
    def band_names(self) -> List[str]:
        return list(self.header.band_names)

    def band(self, name: str) -> np.ndarray:
        """按名称取单个波段"""
        try:
            return self.bands[self.header.band_names.index(name)]
        except ValueError as e:
            raise BandError(f"影像中没有波段 {name}", band=name) from e

    def select(self, names: Sequence[str]) -> "MultiBandImage":
        """按名称顺序选取波段子集"""
        missing = [name for name in names if name not in self.header.band_names]
        if missing:
            raise BandError(f"影像中缺少波段: {missing}", missing=missing)
        index = [self.header.band_names.index(name) for name in names]
        return MultiBandImage(
            header=self.header.with_bands(names),
            bands=np.ascontiguousarray(self.bands[index]),
            mask=self.mask.copy(),
        )

    def stack(self, other: "MultiBandImage") -> "MultiBandImage":
        """将另一幅同尺寸影像的波段追加到本影像之后，掩膜取交集"""
        if (other.width, other.height) != (self.width, self.height):
            raise BoundsError("追加波段的影像尺寸不一致")
        return MultiBandImage.create(
            np.concatenate([self.bands, other.bands], axis=0),
            self.band_names + other.band_names,
            mask=self.mask & other.mask,
            nodata_value=self.header.nodata_value,
            pixel_size_m=self.header.pixel_size_m,
        )

    def valid_count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class Site:
    """带标签的像素坐标 s=(x, y)，x 为列号，y 为行号"""

    id: str
    x: int
    y: int
    label: int


@dataclass(frozen=True)
class SiteTable:
    """站点表"""

    sites: List[Site] = field(default_factory=list)

    def __post_init__(self):
        ids = [site.id for site in self.sites]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise SiteTableError(f"站点 id 重复: {dup}", duplicate_ids=dup)
        bad = [site.id for site in self.sites if site.label not in (0, 1)]
        if bad:
            raise SiteTableError(f"标签只能是 0 或 1: {bad}", site_ids=bad)

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    @property
    def ids(self) -> List[str]:
        return [site.id for site in self.sites]

    @property
    def labels(self) -> np.ndarray:
        return np.array([site.label for site in self.sites], dtype=int)

    @property
    def coordinates(self) -> np.ndarray:
        """(n, 2) 数组，每行为 (x, y)"""
        return np.array([(site.x, site.y) for site in self.sites], dtype=int).reshape(
            -1, 2
        )

    @property
    def n1(self) -> int:
        return sum(1 for site in self.sites if site.label == 1)

    @property
    def n0(self) -> int:
        return sum(1 for site in self.sites if site.label == 0)

    def has_both_classes(self) -> bool:
        return self.n0 > 0 and self.n1 > 0

    def check_bounds(self, width: int, height: int) -> None:
        """校验所有站点都位于影像范围内"""
        outside = [
            site.id
            for site in self.sites
            if not (0 <= site.x < width and 0 <= site.y < height)
        ]
        if outside:
            raise BoundsError(f"站点越出影像范围: {outside}", site_ids=outside)

    def merge(self, other: "SiteTable") -> "SiteTable":
        return SiteTable(self.sites + other.sites)

    def translate(self, dx: int, dy: int) -> "SiteTable":
        return SiteTable(
            [Site(s.id, s.x + dx, s.y + dy, s.label) for s in self.sites]
        )

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "SiteTable":
        """从字典记录创建实例"""
        return cls(
            [
                Site(
                    id=str(r["id"]),
                    x=int(r["x"]),
                    y=int(r["y"]),
                    label=int(r["label"]),
                )
                for r in records
            ]
        )

    def to_records(self) -> List[dict]:
        return [
            {"id": s.id, "x": s.x, "y": s.y, "label": s.label} for s in self.sites
        ]
