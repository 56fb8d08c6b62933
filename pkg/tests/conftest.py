"""测试公共夹具"""

import json
from pathlib import Path
from typing import Sequence

import numpy as np
import pytest

from apmkit.core.models import (
    SLOPE_BAND,
    WORLDVIEW2_BANDS,
    MultiBandImage,
    RadiiTable,
    SynthConfig,
)

# 小环带表：足以覆盖小尺寸合成站点的核心与外环
SMALL_RADII = [(0, 2), (2, 4), (4, 6), (6, 9), (9, 12)]


def random_image(
    rng: np.random.Generator,
    band_names: Sequence[str],
    height: int,
    width: int,
    low: float = 0.05,
    high: float = 1.0,
) -> MultiBandImage:
    bands = rng.uniform(low, high, size=(len(band_names), height, width))
    return MultiBandImage.create(bands, list(band_names))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def swath_band_names():
    return [SLOPE_BAND] + list(WORLDVIEW2_BANDS)


@pytest.fixture
def small_radii() -> RadiiTable:
    return RadiiTable(entries=list(SMALL_RADII))


@pytest.fixture
def small_swath() -> SynthConfig:
    """160×160 的小条带，6 个站点"""
    return SynthConfig(
        width=160,
        height=160,
        n_sites=6,
        site_core_radius=2.5,
        site_ring_radius=6.0,
        min_site_separation=30.0,
        background_texture_scale=6.0,
        seed=3,
    )


def write_radii_csv(path: Path, entries) -> Path:
    lines = ["index,r_in,r_out"]
    lines += [f"{i},{a},{b}" for i, (a, b) in enumerate(entries, start=1)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def pipeline_document(tmp_path, small_swath) -> dict:
    """快速端到端运行用的配置文档（写在 tmp_path 下）"""
    write_radii_csv(tmp_path / "radii.csv", SMALL_RADII)
    swath = small_swath.to_dict()
    swath.pop("band_names")
    return {
        "output_dir": "out",
        "seed": 11,
        "n_jobs": 1,
        "synthetic": {
            "swath": swath,
            "n_background": 12,
            "conventional_informativeness": 0.5,
        },
        "band_configuration": "BDR36",
        "radii_table": "radii.csv",
        "classifier": {"kind": "lda", "shrinkage": 0.1, "priors": "empirical"},
        "pca": {"d_max": 3, "strategy": "error"},
        "gamma_grid": {"start": 0.0, "stop": 1.0, "step": 0.1},
        "compare_band_sets": ["BDR15", "BDR36"],
    }


@pytest.fixture
def config_file(tmp_path, pipeline_document) -> Path:
    path = tmp_path / "pipeline.json"
    path.write_text(json.dumps(pipeline_document, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def make_image():
    return random_image
