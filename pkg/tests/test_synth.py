"""合成条带生成器测试"""

import numpy as np
import pytest

from apmkit.core.annuli import extract_features
from apmkit.core.errors import ConfigError, SynthError
from apmkit.core.models import CONVENTIONAL_LEVELS, RadiiTable, SynthConfig
from apmkit.core.raster_io import sample_at_sites
from apmkit.core.synth import (
    generate_conventional_raster,
    generate_labeled_dataset,
    generate_swath,
)


def test_same_seed_same_swath(small_swath):
    img_a, sites_a = generate_swath(small_swath)
    img_b, sites_b = generate_swath(small_swath)
    np.testing.assert_array_equal(img_a.bands, img_b.bands)
    assert sites_a == sites_b
    assert sites_a.ids[0] == "site-001"


def test_different_seed_moves_sites(small_swath):
    _, sites_a = generate_swath(small_swath)
    small_swath.seed += 1
    _, sites_b = generate_swath(small_swath)
    assert sites_a.coordinates.tolist() != sites_b.coordinates.tolist()


def test_sites_respect_separation_and_margin(small_swath):
    _, sites = generate_swath(small_swath)
    xy = sites.coordinates.astype(float)
    assert len(sites) == small_swath.n_sites
    d = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=-1))
    off_diagonal = d[~np.eye(len(xy), dtype=bool)]
    assert off_diagonal.min() >= small_swath.min_site_separation
    assert xy.min() >= small_swath.site_ring_radius
    assert xy.max() < small_swath.width - small_swath.site_ring_radius


def test_flat_swath_without_noise_or_contrast(small_swath, small_radii):
    small_swath.noise_sigma = 0.0
    small_swath.core_contrast = [0.0] * small_swath.band_count
    small_swath.ring_contrast = [0.0] * small_swath.band_count
    img, sites = generate_swath(small_swath)

    for b, level in enumerate(small_swath.levels()):
        assert np.all(img.bands[b] == np.float32(level))
    features = extract_features(img, sites, small_radii)
    n = len(small_radii)
    for b in range(small_swath.band_count):
        mads = features.values[:, (2 * b + 1) * n : (2 * b + 2) * n]
        assert np.all(mads == 0.0)


def test_planted_core_shifts_inner_median():
    cfg = SynthConfig()
    img, table = generate_labeled_dataset(cfg, n_background=100)
    assert (table.n1, table.n0) == (37, 100)

    features = extract_features(img, table, RadiiTable(entries=[(0, 2)]))
    # 每个波段只有一个环带：列依次为 median、MAD
    medians = features.values[:, 0::2]
    site_mean = medians[table.labels == 1].mean(axis=0)
    background_mean = medians[table.labels == 0].mean(axis=0)
    offsets = cfg.core_offsets()
    shift = (site_mean - background_mean) * np.sign(offsets)
    assert np.all(shift >= 0.5 * np.abs(offsets))


def test_background_points_lie_on_valid_pixels(small_swath):
    img, table = generate_labeled_dataset(small_swath, n_background=12)
    assert table.n0 == 12
    positives = table.coordinates[table.labels == 1]
    min_px = 4 * small_swath.site_ring_radius
    for site in table:
        assert img.mask[site.y, site.x]
        if site.label == 0:
            d = np.sqrt(((positives - (site.x, site.y)) ** 2).sum(axis=1))
            assert d.min() >= min_px


def test_no_background_gives_single_class(small_swath):
    _, table = generate_labeled_dataset(small_swath, n_background=0)
    assert table.n0 == 0
    assert not table.has_both_classes()


def test_impossible_placement():
    cfg = SynthConfig(
        width=100, height=100, n_sites=50, min_site_separation=80.0, max_placement_attempts=200
    )
    with pytest.raises(SynthError):
        generate_swath(cfg)


def test_swath_smaller_than_ring():
    with pytest.raises(SynthError):
        generate_swath(SynthConfig(width=15, height=15, n_sites=1))


def test_too_many_background_points(small_swath):
    with pytest.raises(SynthError):
        generate_labeled_dataset(small_swath, n_background=small_swath.width * small_swath.height)


@pytest.mark.parametrize(
    "overrides",
    [
        {"core_contrast": [0.1, 0.2]},
        {"site_core_radius": 6.0, "site_ring_radius": 5.0},
        {"noise_sigma": -0.1},
        {"n_sites": -1},
    ],
)
def test_invalid_synth_config(overrides):
    with pytest.raises(ConfigError):
        SynthConfig(**overrides)


def test_synth_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"width": 64, "colour": "red"})
    assert SynthConfig.from_dict({"width": 64}).width == 64


# ---------------------------------------------------------------- 传统 APM


def test_conventional_raster_uses_six_levels(small_swath):
    _, sites = generate_swath(small_swath)
    conv = generate_conventional_raster(small_swath, sites)
    assert conv.band_names == ["conventional"]
    values, counts = np.unique(conv.bands[0], return_counts=True)
    np.testing.assert_allclose(values, np.asarray(CONVENTIONAL_LEVELS, dtype=np.float32))
    assert counts.max() - counts.min() <= 1


def test_fully_informative_conventional_raster_ranks_sites_highest(small_swath):
    _, sites = generate_swath(small_swath)
    conv = generate_conventional_raster(small_swath, sites, informativeness=1.0)
    assert np.all(sample_at_sites(conv, sites) == np.float32(1.0))


def test_conventional_raster_is_deterministic(small_swath):
    _, sites = generate_swath(small_swath)
    a = generate_conventional_raster(small_swath, sites, seed=5)
    b = generate_conventional_raster(small_swath, sites, seed=5)
    np.testing.assert_array_equal(a.bands, b.bands)


def test_informativeness_outside_unit_interval(small_swath):
    _, sites = generate_swath(small_swath)
    with pytest.raises(SynthError):
        generate_conventional_raster(small_swath, sites, informativeness=1.5)
