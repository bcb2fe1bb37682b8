"""Command-line entry point: ``lambda-ea {detect,align,eval,synth,verify}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import NoReturn

from lambdaea.aligneval import MetricReport, evaluate_alignment
from lambdaea.checkpoint import load_checkpoint, save_checkpoint
from lambdaea.config import AlignConfig, ExperimentConfig, load_config
from lambdaea.enums import Metric, Setting, VerifySuite, parse_option
from lambdaea.exceptions import ConfigurationError, LambdaError, NotAlignableError, ValidationError
from lambdaea.kgdata import AnchorSplit, KGPair, gen_synthetic_pair, load_kg_pair, save_kg_pair
from lambdaea.logging import configure_logging, get_logger
from lambdaea.pipeline import Lambda, apply_runtime
from lambdaea.reports import (
    CHECKPOINT_FILE,
    DETECTION_FILE,
    EMBEDDINGS_FILE,
    HISTORY_FILE,
    METRICS_FILE,
    PAIRS_FILE,
    SPLIT_FILE,
    VERIFY_FILE,
    detection_to_dict,
    load_embeddings,
    maybe_plot_history,
    read_detection,
    read_json,
    save_embeddings,
    write_history_csv,
    write_json,
    write_manifest,
    write_metrics,
    write_pairs_csv,
)
from lambdaea.verify import run_suite

logger = get_logger("cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_NOT_ALIGNABLE = 3


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; exit code 2 means non-convergence here."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _require_dir(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigurationError(f"{what} is required")
    return path


def _load_split(path: Path, pair: KGPair) -> AnchorSplit | None:
    if not path.exists():
        return None
    split = AnchorSplit.from_dict(read_json(path))
    split.validate_against(pair)
    logger.info("Reusing anchor split from %s", path)
    return split


# --------------------------------------------------------------------------- commands


def cmd_detect(config: ExperimentConfig) -> int:
    """Detection run: writes the detection report, history, checkpoint, split and manifest."""
    data = _require_dir(config.data, "a data directory (--data)")
    out = _require_dir(config.out, "an output directory (--out)")
    apply_runtime(config)
    pair = load_kg_pair(data)
    runner = Lambda(pair, config)
    detection = runner.detect()

    out.mkdir(parents=True, exist_ok=True)
    if runner.model is None:
        raise ValidationError("detection finished without an encoder to checkpoint")
    save_checkpoint(runner.model, out / CHECKPOINT_FILE)
    write_json(out / DETECTION_FILE, detection_to_dict(detection, CHECKPOINT_FILE), kind="detection")
    write_history_csv(detection.history, out / HISTORY_FILE)
    write_json(out / SPLIT_FILE, runner.split.to_dict(), kind="split")
    write_manifest(out, "detect", config)
    if config.plots:
        maybe_plot_history(detection.history, out)

    if not detection.alignable:
        logger.warning("Pair judged not alignable (pi_p_u=%.4f)", detection.priors.pi_p_u)
        return EXIT_NOT_ALIGNABLE
    if not detection.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_align(config: ExperimentConfig, detection_path: Path | None = None, force: bool = False) -> int:
    """Alignment run on top of a detection report: pairs, metrics, embeddings, manifest."""
    data = _require_dir(config.data, "a data directory (--data)")
    out = _require_dir(config.out, "an output directory (--out)")
    apply_runtime(config)
    pair = load_kg_pair(data)
    detection_path = detection_path or out / DETECTION_FILE
    detection = read_detection(detection_path)
    if not detection.alignable and not force:
        raise NotAlignableError(detection.priors.pi_p_u, config.ipule.tau_align)

    run_dir = detection_path.parent
    split = _load_split(run_dir / SPLIT_FILE, pair)
    model = None
    checkpoint = read_json(detection_path).get("checkpoint")
    if checkpoint and (run_dir / checkpoint).exists():
        model = load_checkpoint(run_dir / checkpoint, config.encoder)

    runner = Lambda(pair, config, split=split, model=model)
    result = runner.align(detection, force=force, progress=sys.stderr.isatty())
    report = runner.evaluate()

    if runner.embeddings is None:
        raise ValidationError("alignment finished without embeddings")
    write_pairs_csv(result, out / PAIRS_FILE)
    write_metrics(report, out / METRICS_FILE)
    save_embeddings(runner.embeddings, out / EMBEDDINGS_FILE)
    write_json(out / SPLIT_FILE, runner.split.to_dict(), kind="split")
    write_manifest(out, "align", config)
    return EXIT_OK


def cmd_eval(
    pred_path: Path,
    truth_path: Path,
    setting: Setting | str = Setting.CONSOLIDATED,
    align_config: AlignConfig | None = None,
    out: Path | None = None,
) -> MetricReport:
    """Recompute metrics from a run directory against a dataset directory."""
    kind = parse_option(Setting, setting, "setting")
    align_config = align_config or AlignConfig()
    pair = load_kg_pair(truth_path)
    split = _load_split(pred_path / SPLIT_FILE, pair)
    if split is None:
        raise ConfigurationError(f"{pred_path} has no {SPLIT_FILE}")
    embeddings = load_embeddings(pred_path / EMBEDDINGS_FILE)
    detection_file = pred_path / DETECTION_FILE
    detection = read_detection(detection_file) if detection_file.exists() else None
    if kind is Setting.CONSOLIDATED and detection is None:
        raise ConfigurationError("the consolidated setting needs a detection report")

    report = evaluate_alignment(
        embeddings,
        pair,
        split,
        detection if kind is Setting.CONSOLIDATED else None,
        align_config.metric,
        align_config.csls_k,
        reverse=align_config.reverse,
    )
    if out is not None:
        write_metrics(report, out / METRICS_FILE, kind)
    return report


def cmd_synth(config: ExperimentConfig) -> int:
    out = _require_dir(config.out, "an output directory (--out)")
    pair = gen_synthetic_pair(config.synth)
    save_kg_pair(pair, out)
    write_manifest(out, "synth", config)
    logger.info(
        "Synthetic pair: %d + %d entities, %d anchors, true pi_p=%.3f",
        pair.source.n_entities,
        pair.target.n_entities,
        len(pair.anchors),
        pair.matchable_ratio,
    )
    return EXIT_OK


def cmd_verify(suite: str, seed: int = 0, out: Path | None = None) -> int:
    reports = run_suite(suite, seed)
    payload = [report.to_dict() for report in reports]
    print(json.dumps(payload, indent=2))
    if out is not None:
        write_json(out / VERIFY_FILE, payload, kind="verify report")
    return EXIT_OK if all(report.passed for report in reports) else EXIT_USAGE


# --------------------------------------------------------------------------- parsing


def _add_config_options(parser: argparse.ArgumentParser, data: bool = True) -> None:
    parser.add_argument("--config", type=Path, help="TOML configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one configuration value (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="random seed (required unless configured)")
    if data:
        parser.add_argument("--data", type=Path, help="dataset directory")
    parser.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lambda-ea", description="Dangling-aware entity alignment")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    detect = commands.add_parser("detect", help="estimate priors and detect dangling entities")
    _add_config_options(detect)

    align = commands.add_parser("align", help="align entities predicted matchable")
    _add_config_options(align)
    align.add_argument("--detection", type=Path, help="detection report (default: OUT/detection.json)")
    align.add_argument("--force", action="store_true", help="align even when judged not alignable")

    evaluate = commands.add_parser("eval", help="recompute metrics for a run directory")
    evaluate.add_argument("pred", type=Path, help="run directory with embeddings.npy and split.json")
    evaluate.add_argument("truth", type=Path, help="dataset directory with the ground truth")
    evaluate.add_argument("--setting", default=Setting.CONSOLIDATED.value, help="relaxed or consolidated")
    evaluate.add_argument("--metric", default=Metric.CSLS.value, help="csls or cosine")
    evaluate.add_argument("--csls-k", type=int, default=10)
    evaluate.add_argument("--reverse", action="store_true", help="evaluate target-to-source")
    evaluate.add_argument("--out", type=Path, help="directory for metrics.json")

    synth = commands.add_parser("synth", help="generate a synthetic KG pair")
    _add_config_options(synth, data=False)

    verify = commands.add_parser("verify", help="run the self-check suites")
    verify.add_argument("suite", help="lemmas, pu, gradients, structure or all")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", type=Path, help="directory for verify.json")
    return parser


def _resolve(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(
        args.config,
        args.overrides,
        seed=args.seed,
        data=getattr(args, "data", None),
        out=args.out,
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    configure_logging(level)

    try:
        match args.command:
            case "detect":
                return cmd_detect(_resolve(args))
            case "align":
                return cmd_align(_resolve(args), args.detection, args.force)
            case "eval":
                align_config = AlignConfig(metric=args.metric, csls_k=args.csls_k, reverse=args.reverse)
                report = cmd_eval(args.pred, args.truth, args.setting, align_config, args.out)
                print(json.dumps(report.to_dict(parse_option(Setting, args.setting, "setting")), indent=2))
                return EXIT_OK
            case "synth":
                return cmd_synth(_resolve(args))
            case "verify":
                parse_option(VerifySuite, args.suite, "suite")
                return cmd_verify(args.suite, args.seed, args.out)
    except NotAlignableError:
        return EXIT_NOT_ALIGNABLE
    except LambdaError:
        # already logged on construction
        return EXIT_USAGE
    parser.error(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
