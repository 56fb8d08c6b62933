"""APM Kit Configuration Settings"""

import json
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np
from dotenv import load_dotenv

from ..core.errors import ConfigError
from ..core.models import BAND_CONFIGURATIONS, SynthConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _env_flag(name: str, default: bool = False) -> bool:
    return os.getenv(name, str(default)).lower() in ("1", "true", "yes")


@dataclass
class ApmKitConfig:
    """进程级配置：日志与并行度，来自环境变量与 .env 文件"""

    app_name: str = "APM Kit"
    app_version: str = "0.1.0"
    debug_mode: bool = False

    # 日志配置
    log_level: str = "INFO"
    log_dir: str = "logs"

    # 默认并行度，1 表示串行
    n_jobs: int = 1

    def __post_init__(self):
        """初始化后处理"""
        load_dotenv(override=False)
        self.debug_mode = _env_flag("APMKIT_DEBUG", self.debug_mode)
        self.log_level = os.getenv("APMKIT_LOG_LEVEL", self.log_level).upper()
        self.log_dir = os.getenv("APMKIT_LOG_DIR", self.log_dir)
        try:
            self.n_jobs = int(os.getenv("APMKIT_N_JOBS", str(self.n_jobs)))
        except ValueError:
            logger.warning("APMKIT_N_JOBS 不是整数，使用默认值 1")
            self.n_jobs = 1

    def validate_config(self) -> bool:
        """验证配置是否有效"""
        if self.log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            logger.warning(f"未知日志级别: {self.log_level}")
            return False
        if self.n_jobs == 0:
            logger.warning("n_jobs 不能为 0")
            return False
        return True

    def get_config_summary(self) -> dict:
        """获取配置摘要"""
        return {
            "app_name": self.app_name,
            "app_version": self.app_version,
            "debug_mode": self.debug_mode,
            "log_level": self.log_level,
            "log_dir": self.log_dir,
            "n_jobs": self.n_jobs,
        }


# ---------------------------------------------------------------- 流水线配置


def _reject_unknown(cls, data: Mapping[str, Any], section: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{section} 中有未知字段: {unknown}", keys=unknown, section=section)


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{key}: {message}", key=key)


@dataclass
class RegionInputs:
    """一个区域（训练或测试）的输入文件"""

    raster: str
    sites: str
    # 传统 APM 评分：单波段栅格（在站点处采样）或 `id,conventional` CSV，二选一
    conventional_raster: Optional[str] = None
    conventional_csv: Optional[str] = None

    def validate(self, section: str) -> None:
        _require(
            not (self.conventional_raster and self.conventional_csv),
            f"{section}.conventional_*",
            "conventional_raster 与 conventional_csv 只能指定一个",
        )

    def paths(self) -> Dict[str, str]:
        return {k: v for k, v in self.to_dict().items() if v}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], section: str = "region") -> "RegionInputs":
        _reject_unknown(cls, data, section)
        for key in ("raster", "sites"):
            _require(key in data, f"{section}.{key}", "缺少必填字段")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ClassifierSettings:
    """分类器 h 的参数"""

    kind: str = "lda"
    shrinkage: float = 0.1
    priors: str = "empirical"
    k: int = 5
    l: int = 3
    outer_score: str = "pair_rank"

    def validate(self) -> None:
        _require(self.kind in ("lda", "knn"), "classifier.kind", f"必须是 lda 或 knn: {self.kind}")
        _require(0.0 <= self.shrinkage <= 1.0, "classifier.shrinkage", "必须在 [0,1] 内")
        _require(
            self.priors in ("empirical", "equal"),
            "classifier.priors",
            f"必须是 empirical 或 equal: {self.priors}",
        )
        _require(1 <= self.l <= self.k, "classifier.l", f"需要 1 ≤ l ≤ k (k={self.k}, l={self.l})")
        _require(
            self.outer_score in ("pair_rank", "posterior"),
            "classifier.outer_score",
            f"必须是 pair_rank 或 posterior: {self.outer_score}",
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ClassifierSettings":
        _reject_unknown(cls, data, "classifier")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class PcaSettings:
    """PCA 维数选择参数"""

    d_max: Optional[int] = None
    strategy: str = "error"
    variance_threshold: float = 0.95
    standardize: bool = False

    def validate(self) -> None:
        _require(self.d_max is None or self.d_max >= 1, "pca.d_max", "必须 ≥ 1 或为 null")
        _require(
            self.strategy in ("error", "variance_threshold"),
            "pca.strategy",
            f"必须是 error 或 variance_threshold: {self.strategy}",
        )
        _require(0.0 < self.variance_threshold <= 1.0, "pca.variance_threshold", "必须在 (0,1] 内")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PcaSettings":
        _reject_unknown(cls, data, "pca")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SyntheticSettings:
    """未给出训练数据时用于生成训练/测试条带的合成配置"""

    swath: SynthConfig = field(default_factory=SynthConfig)
    n_background: int = 100
    # 合成传统 APM 与站点邻近度的相关程度
    conventional_informativeness: float = 0.5

    def validate(self) -> None:
        _require(self.n_background >= 0, "synthetic.n_background", "不能为负")
        _require(
            0.0 <= self.conventional_informativeness <= 1.0,
            "synthetic.conventional_informativeness",
            "必须在 [0,1] 内",
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SyntheticSettings":
        _reject_unknown(cls, data, "synthetic")
        values = dict(data)
        values["swath"] = SynthConfig.from_dict(values.get("swath", {}))
        return cls(**values)

    def to_dict(self) -> dict:
        return {
            "swath": self.swath.to_dict(),
            "n_background": self.n_background,
            "conventional_informativeness": self.conventional_informativeness,
        }


def default_gamma_values() -> List[float]:
    return [round(0.01 * i, 2) for i in range(101)]


def parse_gamma_grid(value: Any) -> List[float]:
    """γ 网格：数值列表，或 {start, stop, step}（含端点）"""
    if isinstance(value, Mapping):
        _require(set(value) == {"start", "stop", "step"}, "gamma_grid", "需要 start/stop/step")
        start, stop, step = (float(value[k]) for k in ("start", "stop", "step"))
        _require(step > 0, "gamma_grid.step", "必须为正")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 10) for i in range(count)]
    else:
        values = [float(v) for v in value]
    _require(len(values) > 0, "gamma_grid", "不能为空")
    _require(all(0.0 <= v <= 1.0 for v in values), "gamma_grid", "所有 γ 必须在 [0,1] 内")
    return values


@dataclass
class PipelineConfig:
    """一次流水线运行的全部参数（JSON 文档）"""

    output_dir: str = "output"
    seed: int = 0
    n_jobs: int = 1
    training: Optional[RegionInputs] = None
    test: Optional[RegionInputs] = None
    synthetic: Optional[SyntheticSettings] = None
    band_configuration: str = "BDR36"
    ktt_coefficients: Optional[str] = None
    radii_table: Optional[str] = None
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    pca: PcaSettings = field(default_factory=PcaSettings)
    gamma_grid: List[float] = field(default_factory=default_gamma_values)
    fnr_levels: List[float] = field(default_factory=lambda: [0.05, 0.10, 0.20])
    compare_band_sets: List[str] = field(default_factory=list)
    # 相对路径的基准目录（配置文件所在目录），不写入 JSON
    base_dir: str = field(default=".", repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """参数范围检查；文件存在性由 check_files 单独检查"""
        _require(self.n_jobs != 0, "n_jobs", "不能为 0")
        _require(
            self.band_configuration in BAND_CONFIGURATIONS,
            "band_configuration",
            f"未知波段组合 {self.band_configuration}，可选: {sorted(BAND_CONFIGURATIONS)}",
        )
        _require(
            self.training is not None or self.synthetic is not None,
            "training",
            "必须提供 training 或 synthetic 之一",
        )
        _require(
            all(0.0 < v < 1.0 for v in self.fnr_levels), "fnr_levels", "必须在 (0,1) 内"
        )
        unknown_sets = [n for n in self.compare_band_sets if n not in BAND_CONFIGURATIONS]
        _require(not unknown_sets, "compare_band_sets", f"未知波段组合: {unknown_sets}")
        for name in ("training", "test"):
            region = getattr(self, name)
            if region is not None:
                region.validate(name)
        self.classifier.validate()
        self.pca.validate()
        if self.synthetic is not None:
            self.synthetic.validate()

    def resolve(self, path: Optional[PathLike]) -> Optional[Path]:
        """相对路径按配置文件目录解析"""
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def output_path(self) -> Path:
        return self.resolve(self.output_dir)

    def check_files(self) -> None:
        """检查配置中引用的输入文件都存在"""
        missing = []
        for name in ("training", "test"):
            region = getattr(self, name)
            if region is None:
                continue
            for key, value in region.paths().items():
                path = self.resolve(value)
                if key == "raster" and path.suffix not in (".json", ".bin"):
                    path = path.with_suffix(".json")
                if not path.exists():
                    missing.append(f"{name}.{key}={value}")
        for key in ("ktt_coefficients", "radii_table"):
            value = getattr(self, key)
            if value and not self.resolve(value).exists():
                missing.append(f"{key}={value}")
        if missing:
            raise ConfigError(f"引用的文件不存在: {missing}", missing=missing)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: PathLike = ".") -> "PipelineConfig":
        """从字典创建实例，拒绝未知字段"""
        _reject_unknown(cls, {k: v for k, v in data.items() if k != "base_dir"}, "config")
        values = dict(data)
        values.pop("base_dir", None)
        try:
            for name in ("training", "test"):
                if values.get(name) is not None:
                    values[name] = RegionInputs.from_dict(values[name], name)
            if values.get("synthetic") is not None:
                values["synthetic"] = SyntheticSettings.from_dict(values["synthetic"])
            values["classifier"] = ClassifierSettings.from_dict(values.get("classifier", {}))
            values["pca"] = PcaSettings.from_dict(values.get("pca", {}))
            if "gamma_grid" in values:
                values["gamma_grid"] = parse_gamma_grid(values["gamma_grid"])
            return cls(**values, base_dir=str(base_dir))
        except TypeError as e:
            raise ConfigError(f"配置字段类型错误: {e}") from e

    @classmethod
    def from_json(cls, path: PathLike) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"配置文件不存在: {path}", path=str(path))
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"配置文件不是合法 JSON: {e}", path=str(path)) from e
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> Dict[str, Any]:
        """转换为 JSON 文档"""
        return {
            "output_dir": self.output_dir,
            "seed": self.seed,
            "n_jobs": self.n_jobs,
            "training": self.training.to_dict() if self.training else None,
            "test": self.test.to_dict() if self.test else None,
            "synthetic": self.synthetic.to_dict() if self.synthetic else None,
            "band_configuration": self.band_configuration,
            "ktt_coefficients": self.ktt_coefficients,
            "radii_table": self.radii_table,
            "classifier": self.classifier.to_dict(),
            "pca": self.pca.to_dict(),
            "gamma_grid": list(self.gamma_grid),
            "fnr_levels": list(self.fnr_levels),
            "compare_band_sets": list(self.compare_band_sets),
        }

    def with_overrides(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        """按点号路径覆盖字段，例如 {"classifier.shrinkage": 0.2}"""
        data = self.to_dict()
        for dotted, value in overrides.items():
            keys = dotted.split(".")
            node = data
            for key in keys[:-1]:
                if node.get(key) is None:
                    node[key] = {}
                if not isinstance(node[key], dict):
                    raise ConfigError(f"无法覆盖 {dotted}: {key} 不是对象", key=dotted)
                node = node[key]
            node[keys[-1]] = value
        return PipelineConfig.from_dict(data, base_dir=self.base_dir)


def parse_override(text: str) -> Dict[str, Any]:
    """解析命令行 `key=value`；value 按 JSON 解析，失败时视为字符串"""
    if "=" not in text:
        raise ConfigError(f"覆盖项必须是 key=value 形式: {text}", key=text)
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return {key.strip(): value}


# 创建全局配置实例
config = ApmKitConfig()
