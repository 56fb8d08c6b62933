"""端到端流水线、比较实验与命令行测试"""

import json
from dataclasses import replace
from pathlib import Path

import pandas as pd
import pytest

from apmkit.cli import main
from apmkit.config import PipelineConfig
from apmkit.config.logging_config import apm_logger
from apmkit.core.errors import ConfigError, PipelineStageError
from apmkit.core.models import MultiBandImage, Site, SiteTable
from apmkit.core.raster_io import save_raster, save_sites
from apmkit.graph import compare_band_sets, compare_classifiers, run_pipeline

EXPECTED_OUTPUTS = [
    "synth.training.json",
    "synth.training.bin",
    "synth.training.sites.csv",
    "synth.test.conventional.json",
    "extract.csv",
    "extract.test.csv",
    "assess.json",
    "assess.csv",
    "train.json",
    "predict.csv",
    "evaluate.roc.enhanced.csv",
    "evaluate.roc.conventional.csv",
    "evaluate.roc.combined.csv",
    "evaluate.roc.svg",
    "evaluate.scores.csv",
    "evaluate.auc_gamma.csv",
    "evaluate.auc_gamma.svg",
    "report.json",
]


@pytest.fixture(autouse=True)
def _close_cli_logging():
    yield
    apm_logger.close()


@pytest.fixture
def pipeline_config(config_file) -> PipelineConfig:
    return PipelineConfig.from_json(config_file)


def _snapshot(directory: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_run_writes_all_outputs(pipeline_config):
    report = run_pipeline(pipeline_config)
    out = pipeline_config.output_path
    for name in EXPECTED_OUTPUTS:
        assert (out / name).is_file(), name

    assert report["band_configuration"] == "BDR36"
    assert report["bdr_count"] == 36
    assert report["feature_dimension"] == 36 * 2 * 5
    assert report["training"] == {"n": 18, "n1": 6, "n0": 12}
    assert report["evaluation"]["evaluated_on"] == "test"
    assert report["evaluation"]["gamma"]["selected_on"] == "training_loocv"
    assert set(report["evaluation"]["auc"]) == {"enhanced", "conventional", "combined"}
    assert 1 <= report["model"]["d_star"] <= 3
    assert json.loads((out / "report.json").read_text(encoding="utf-8")) == report


def test_report_only_without_writing(pipeline_config):
    report = run_pipeline(pipeline_config, write_outputs=False)
    assert not pipeline_config.output_path.exists()
    assert "assessment" in report


def test_rerun_is_byte_identical(pipeline_config, tmp_path):
    run_pipeline(pipeline_config.with_overrides({"output_dir": str(tmp_path / "first")}))
    run_pipeline(
        pipeline_config.with_overrides({"output_dir": str(tmp_path / "second"), "n_jobs": 2})
    )
    first = _snapshot(tmp_path / "first")
    second = _snapshot(tmp_path / "second")
    assert sorted(first) == sorted(second)
    for name in first:
        assert first[name] == second[name], name


def test_gamma_zero_reproduces_conventional_auc(pipeline_config):
    report = run_pipeline(pipeline_config.with_overrides({"gamma_grid": [0.0]}), write_outputs=False)
    auc = report["evaluation"]["auc"]
    assert report["evaluation"]["gamma"]["gamma_star"] == 0.0
    assert auc["combined"] == auc["conventional"]


def test_training_only_region_evaluates_on_loocv(pipeline_config, tmp_path):
    # 先生成合成区域，再作为文件输入只配置训练区
    run_pipeline(pipeline_config)
    out = pipeline_config.output_path
    cfg = pipeline_config.with_overrides(
        {
            "synthetic": None,
            "training": {
                "raster": str(out / "synth.training.json"),
                "sites": str(out / "synth.training.sites.csv"),
                "conventional_raster": str(out / "synth.training.conventional.json"),
            },
            "output_dir": str(tmp_path / "files"),
        }
    )
    report = run_pipeline(cfg, write_outputs=False)
    assert report["evaluation"]["evaluated_on"] == "training_loocv"
    assert report["evaluation"]["auc"]["enhanced"] == report["assessment"]["auc"]


def test_out_of_bounds_site_names_stage_and_site(tmp_path, pipeline_document, rng, swath_band_names):
    img = MultiBandImage.create(rng.uniform(0.1, 1.0, size=(9, 30, 30)), swath_band_names)
    save_raster(img, tmp_path / "img.json")
    save_sites(
        SiteTable([Site("inside", 10, 10, 1), Site("stray", 45, 3, 0)]), tmp_path / "sites.csv"
    )
    pipeline_document.pop("synthetic")
    pipeline_document["training"] = {"raster": "img.json", "sites": "sites.csv"}
    (tmp_path / "bad.json").write_text(json.dumps(pipeline_document), encoding="utf-8")

    with pytest.raises(PipelineStageError) as excinfo:
        run_pipeline(PipelineConfig.from_json(tmp_path / "bad.json"))
    assert excinfo.value.stage == "load_inputs"
    assert excinfo.value.site_ids == ["stray"]

    assert main(["--no-log-files", "run", "--config", str(tmp_path / "bad.json")]) == 1


# ---------------------------------------------------------------- 比较实验


def test_compare_band_sets_dedupes(pipeline_config):
    table = compare_band_sets(pipeline_config, ["BDR15", "BDR36", "BDR36"], write_outputs=False)
    assert [row["band_set"] for row in table["rows"]] == ["BDR15", "BDR36"]
    assert [row["bdr_count"] for row in table["rows"]] == [15, 36]
    assert [row["feature_dimension"] for row in table["rows"]] == [150, 360]
    assert len(table["warnings"]) == 1
    for row in table["rows"]:
        assert 0.0 <= row["auc"] <= 1.0
        assert 1 <= row["d_star"] <= 3


def test_compare_band_sets_needs_a_set(pipeline_config):
    with pytest.raises(ConfigError):
        compare_band_sets(pipeline_config, [])
    with pytest.raises(ConfigError):
        compare_band_sets(pipeline_config, ["BDR15", "XYZ"])


def test_compare_band_sets_matches_single_assessment(pipeline_config):
    table = compare_band_sets(pipeline_config, ["BDR36"], write_outputs=False)
    report = run_pipeline(pipeline_config, write_outputs=False)
    assert table["rows"][0]["auc"] == report["assessment"]["auc"]
    assert table["rows"][0]["outer_error"] == report["assessment"]["outer_error"]


def test_compare_classifiers(pipeline_config):
    table = compare_classifiers(pipeline_config)
    assert [row["classifier"] for row in table["rows"]] == ["lda", "knn"]
    for row in table["rows"]:
        assert 0.0 <= row["outer_error"] <= 1.0
        assert 0.0 <= row["rejection_rate"] <= 1.0
    assert table["rows"][0]["rejection_rate"] == 0.0
    assert (pipeline_config.output_path / "compare-classifiers.csv").is_file()


# ---------------------------------------------------------------- 命令行


def _cli(capsys, *args) -> dict:
    code = main(["--no-log-files", *args])
    captured = capsys.readouterr()
    assert code == 0, captured.err
    return json.loads(captured.out)


def test_staged_commands_reproduce_run_report(config_file, pipeline_config, tmp_path, capsys):
    full = run_pipeline(pipeline_config.with_overrides({"output_dir": str(tmp_path / "full")}))

    staged = tmp_path / "staged"
    common = ["--config", str(config_file), "--output-dir", str(staged)]
    _cli(capsys, "extract", *common)
    _cli(capsys, "train", *common)
    _cli(capsys, "predict", *common)
    summary = _cli(capsys, "evaluate", *common)

    assert summary["auc"] == full["evaluation"]["auc"]
    assert json.loads((staged / "report.json").read_text(encoding="utf-8")) == full
    assert (staged / "report.json").read_bytes() == (tmp_path / "full" / "report.json").read_bytes()


def test_cli_synth_and_combine(config_file, tmp_path, capsys):
    out = tmp_path / "cli"
    summary = _cli(capsys, "synth", "--config", str(config_file), "--output-dir", str(out))
    assert summary["training_sites"] == 18
    assert (out / "synth.test.sites.csv").is_file()

    _cli(capsys, "run", "--config", str(config_file), "--output-dir", str(out))
    combined = _cli(
        capsys,
        "combine",
        "--config",
        str(config_file),
        "--output-dir",
        str(out),
        "--scores",
        str(out / "evaluate.scores.csv"),
    )
    assert combined["tiebreak_check"]["passed"]
    assert (out / "combine.roc.svg").is_file()


def test_cli_overrides(config_file, tmp_path, capsys):
    summary = _cli(
        capsys,
        "compare-bands",
        "--config",
        str(config_file),
        "--output-dir",
        str(tmp_path / "cmp"),
        "--sets",
        "BDR15",
        "--set",
        "pca.d_max=2",
    )
    assert summary["rows"][0]["band_set"] == "BDR15"
    assert summary["rows"][0]["d_star"] in (1, 2)
    assert (tmp_path / "cmp" / "compare-bands.json").is_file()


def test_unknown_flag_is_usage_error(config_file, capsys):
    assert main(["run", "--config", str(config_file), "--bogus"]) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "UsageError"


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 2


def test_missing_config_file_exit_code(tmp_path, capsys):
    assert main(["--no-log-files", "run", "--config", str(tmp_path / "nope.json")]) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_invalid_override_exit_code(config_file, capsys):
    code = main(["--no-log-files", "run", "--config", str(config_file), "--set", "classifier.kind=tree"])
    assert code == 2


def test_assessment_scores_are_probabilities(pipeline_config):
    run_pipeline(pipeline_config)
    frame = pd.read_csv(pipeline_config.output_path / "assess.csv", dtype={"id": str})
    assert frame["score"].between(0.0, 1.0).all()
    assert set(frame["label"]) == {0, 1}
    assert frame["d_star"].between(1, 3).all()
    assert frame["posterior"].between(0.0, 1.0).all()


def test_posterior_outer_score_writes_posteriors_as_scores(pipeline_config):
    config = replace(pipeline_config, classifier=replace(pipeline_config.classifier, outer_score="posterior"))
    run_pipeline(config)
    frame = pd.read_csv(config.output_path / "assess.csv", dtype={"id": str})
    assert (frame["score"] == frame["posterior"]).all()
