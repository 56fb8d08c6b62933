"""APM Kit Configuration Package"""

from .settings import (
    ApmKitConfig,
    ClassifierSettings,
    PcaSettings,
    PipelineConfig,
    RegionInputs,
    SyntheticSettings,
    config,
    parse_override,
)

__all__ = [
    "ApmKitConfig",
    "ClassifierSettings",
    "PcaSettings",
    "PipelineConfig",
    "RegionInputs",
    "SyntheticSettings",
    "config",
    "parse_override",
]
