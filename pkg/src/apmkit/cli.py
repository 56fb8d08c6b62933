"""apmkit 命令行入口

每个子命令都读取 JSON 配置（--config），可用 --set key=value 覆盖字段；
成功时在 stdout 输出 JSON 摘要并返回 0，失败时在 stderr 输出错误 JSON。
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .config.logging_config import get_logger, log_shutdown, log_startup, setup_logging
from .config.settings import PipelineConfig, config as app_config, parse_override
from .core.annuli import load_features
from .core.artifacts import write_json
from .core.errors import ApmKitError, ConfigError
from .core.evaluation import (
    convex_combine,
    load_scores,
    plot_auc_gamma,
    plot_roc,
    roc_curve,
    save_auc_gamma,
    save_roc,
    save_scores,
    select_gamma,
    tiebreak_bound,
    tiebreak_refinement_check,
)
from .core.model import (
    load_assessment,
    load_model,
    nested_loocv,
    predict_scores,
    save_assessment,
    save_model,
    train_full,
)
from .core.raster_io import save_raster
from .core.workflow.nodes import (
    TIEBREAK_EPSILON,
    assessment_auc,
    build_report,
    evaluate_results,
    extract,
    load_inputs,
    model_options,
    output_file,
    save_assessment_table,
    save_predictions,
    synthesize_regions,
    transform,
    write_evaluation,
)
from .graph import compare_band_sets, compare_classifiers, run_pipeline

logger = get_logger("cli")

EXIT_RUNTIME = 1
EXIT_USAGE = 2


class _UsageError(Exception):
    """命令行参数错误"""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _emit(payload: Any) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.from_json(args.config)
    overrides: Dict[str, Any] = {}
    for item in args.overrides or []:
        overrides.update(parse_override(item))
    if args.output_dir is not None:
        overrides["output_dir"] = str(Path(args.output_dir).absolute())
    if args.n_jobs is not None:
        overrides["n_jobs"] = args.n_jobs
    elif app_config.n_jobs != 1 and config.n_jobs == 1:
        overrides["n_jobs"] = app_config.n_jobs
    return config.with_overrides(overrides) if overrides else config


def _path_or_default(value: Optional[str], config: PipelineConfig, name: str) -> Path:
    return Path(value) if value else output_file(config, name)


def _inputs_state(config: PipelineConfig) -> Dict[str, Any]:
    state: Dict[str, Any] = {"config": config, "write_outputs": False}
    state.update(load_inputs(state))
    return state


# ---------------------------------------------------------------- 子命令


def cmd_synth(config: PipelineConfig, args) -> Dict[str, Any]:
    """生成合成训练区与测试区"""
    if config.synthetic is None:
        raise ConfigError("配置中没有 synthetic 段", key="synthetic")
    update = synthesize_regions(config, write=True)
    return {
        "outputs": update["outputs"],
        "training_sites": len(update["training_sites"]),
        "test_sites": len(update["test_sites"]),
    }


def cmd_transform(config: PipelineConfig, args) -> Dict[str, Any]:
    """波段组合变换，写出 transform.json/.bin（测试区为 transform.test.*）"""
    state = _inputs_state(config)
    state.update(transform(state))
    outputs = [str(save_raster(state["training_transformed"], output_file(config, "transform.json")))]
    if state.get("test_transformed") is not None:
        outputs.append(
            str(save_raster(state["test_transformed"], output_file(config, "transform.test.json")))
        )
    return {"outputs": outputs, "bands": state["training_transformed"].band_names}


def cmd_extract(config: PipelineConfig, args) -> Dict[str, Any]:
    """环带特征，写出 extract.csv（测试区为 extract.test.csv）"""
    state = _inputs_state(config)
    state.update(transform(state))
    state["write_outputs"] = True
    update = extract(state)
    return {"outputs": update["outputs"], "feature_dimension": update["training_features"].dimension}


def cmd_train(config: PipelineConfig, args) -> Dict[str, Any]:
    """读特征 CSV：训练区嵌套 LOOCV (assess.*) 与全量模型 (train.json)"""
    features = load_features(_path_or_default(args.features, config, "extract.csv"))
    options = model_options(config)
    outputs: List[str] = []
    summary: Dict[str, Any] = {}
    if not args.skip_assessment:
        result = nested_loocv(
            features, None, config.pca.d_max, config.classifier.kind, options, config.n_jobs
        )
        outputs.append(str(save_assessment(result, output_file(config, "assess.json"))))
        outputs.append(str(save_assessment_table(result, output_file(config, "assess.csv"))))
        summary["assessment_auc"] = assessment_auc(result)
    model = train_full(features, None, config.pca.d_max, config.classifier.kind, options)
    outputs.append(str(save_model(model, output_file(config, "train.json"))))
    summary.update(outputs=outputs, d_star=model.d_star)
    return summary


def cmd_predict(config: PipelineConfig, args) -> Dict[str, Any]:
    """用模型给特征 CSV 中的站点打分，写出 predict.csv"""
    model = load_model(_path_or_default(args.model, config, "train.json"))
    features = load_features(_path_or_default(args.features, config, "extract.test.csv"))
    scores, decisions = predict_scores(model, features)
    path = save_predictions(features, scores, decisions, output_file(config, "predict.csv"))
    return {"outputs": [str(path)], "n": features.n}


def _align(values: Optional[np.ndarray], source_ids: List[str], target_ids: List[str]):
    if values is None:
        return None
    lookup = dict(zip(source_ids, values))
    missing = [i for i in target_ids if i not in lookup]
    if missing:
        raise ConfigError(f"传统评分缺少站点: {missing}", site_ids=missing)
    return np.array([lookup[i] for i in target_ids], dtype=float)


def cmd_evaluate(config: PipelineConfig, args) -> Dict[str, Any]:
    """由 assess.json / train.json / predict.csv 生成 evaluate.* 与 report.json"""
    assessment = load_assessment(_path_or_default(args.assessment, config, "assess.json"))
    model = load_model(_path_or_default(args.model, config, "train.json"))
    state = _inputs_state(config)
    training_conv = _align(
        state.get("training_conventional"), state["training_sites"].ids, assessment.ids
    )

    test = dict(test_ids=None, test_labels=None, test_scores=None, test_decisions=None, test_conventional=None)
    predictions_path = _path_or_default(args.predictions, config, "predict.csv")
    if predictions_path.is_file():
        frame = pd.read_csv(predictions_path, dtype={"id": str}, float_precision="round_trip")
        ids = frame["id"].tolist()
        test = dict(
            test_ids=ids,
            test_labels=frame["label"].to_numpy(dtype=int),
            test_scores=frame["score"].to_numpy(dtype=float),
            test_decisions=frame["decision"].to_numpy(dtype=int),
            test_conventional=_align(
                state.get("test_conventional"),
                state["test_sites"].ids if state.get("test_sites") is not None else [],
                ids,
            ),
        )

    evaluation = evaluate_results(config, assessment, training_conv, **test)
    outputs = write_evaluation(config, evaluation)
    payload = build_report(
        config,
        assessment,
        model,
        {"summary": evaluation.summary, "warnings": evaluation.warnings},
    )
    outputs.append(str(write_json(output_file(config, "report.json"), payload)))
    return {"outputs": outputs, "auc": evaluation.summary["auc"]}


def cmd_combine(config: PipelineConfig, args) -> Dict[str, Any]:
    """对评分 CSV 做 γ 选择与 tiebreak 检查"""
    pairs = load_scores(args.scores)
    selection = select_gamma(pairs, config.gamma_grid, config.n_jobs)
    epsilon = args.epsilon if args.epsilon is not None else min(
        TIEBREAK_EPSILON, 0.5 * tiebreak_bound(pairs)
    )
    passed = tiebreak_refinement_check(pairs, epsilon)
    curves = {
        "conventional": roc_curve(pairs.conventional, pairs.labels),
        "enhanced": roc_curve(pairs.enhanced, pairs.labels),
    }
    curves["combined"] = roc_curve(convex_combine(pairs, selection.gamma_star), pairs.labels)
    outputs = [
        save_scores(pairs, selection.gamma_star, output_file(config, "combine.scores.csv")),
        save_auc_gamma(selection, output_file(config, "combine.auc_gamma.csv")),
        plot_auc_gamma(selection, output_file(config, "combine.auc_gamma.svg")),
        plot_roc(curves, output_file(config, "combine.roc.svg")),
    ]
    outputs += [save_roc(c, output_file(config, f"combine.roc.{n}.csv")) for n, c in curves.items()]
    summary = {
        "gamma_star": selection.gamma_star,
        "auc": {name: curve.auc for name, curve in curves.items()},
        "tiebreak_check": {"epsilon": epsilon, "passed": passed},
    }
    outputs.append(write_json(output_file(config, "combine.json"), summary))
    summary["outputs"] = [str(p) for p in outputs]
    return summary


def cmd_compare_bands(config: PipelineConfig, args) -> Dict[str, Any]:
    names = args.sets.split(",") if args.sets else None
    return compare_band_sets(config, names)


def cmd_compare_classifiers(config: PipelineConfig, args) -> Dict[str, Any]:
    return compare_classifiers(config)


def cmd_run(config: PipelineConfig, args) -> Dict[str, Any]:
    return run_pipeline(config)


COMMANDS = {
    "synth": cmd_synth,
    "transform": cmd_transform,
    "extract": cmd_extract,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "combine": cmd_combine,
    "compare-bands": cmd_compare_bands,
    "compare-classifiers": cmd_compare_classifiers,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="apmkit", description="考古预测模型增强流水线")
    parser.add_argument("--log-level", default=None, help="控制台日志级别")
    parser.add_argument("--no-log-files", action="store_true", help="不写 logs/ 下的日志文件")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="流水线 JSON 配置")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            metavar="KEY=VALUE",
            help="覆盖配置字段，例如 classifier.shrinkage=0.2",
        )
        p.add_argument("--output-dir", default=None)
        p.add_argument("--n-jobs", type=int, default=None)
        return p

    add("synth", "生成合成条带")
    add("transform", "波段组合变换")
    add("extract", "提取环带特征")
    p = add("train", "嵌套 LOOCV 评估并训练全量模型")
    p.add_argument("--features", default=None)
    p.add_argument("--skip-assessment", action="store_true")
    p = add("predict", "对测试区打分")
    p.add_argument("--model", default=None)
    p.add_argument("--features", default=None)
    p = add("evaluate", "ROC/γ 评估并生成报告")
    p.add_argument("--assessment", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--predictions", default=None)
    p = add("combine", "评分 CSV 的凸组合与 γ 选择")
    p.add_argument("--scores", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p = add("compare-bands", "比较波段差比组合")
    p.add_argument("--sets", default=None, help="逗号分隔，例如 BDR15,BDR36")
    add("compare-classifiers", "比较 LDA 与 (k,l)-NN")
    add("run", "执行完整流水线")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(json.dumps({"error": "UsageError", "message": str(e)}, ensure_ascii=False), file=sys.stderr)
        return EXIT_USAGE

    setup_logging(console_level=args.log_level, to_files=not args.no_log_files)
    log_startup(args.command)
    try:
        config = _load_config(args)
        _emit(COMMANDS[args.command](config, args))
        return 0
    except ConfigError as e:
        logger.error(f"配置错误: {e}")
        print(json.dumps(e.to_dict(), ensure_ascii=False, default=str), file=sys.stderr)
        return EXIT_USAGE
    except ApmKitError as e:
        logger.error(f"命令 {args.command} 失败: {e}")
        print(json.dumps(e.to_dict(), ensure_ascii=False, default=str), file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"命令 {args.command} 发生未预期错误")
        payload = {"error": type(e).__name__, "message": str(e)}
        print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        log_shutdown()


if __name__ == "__main__":
    sys.exit(main())
