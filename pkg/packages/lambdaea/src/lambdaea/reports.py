"""Artifact writers and readers: JSON reports, CSV tables, manifests and optional plots."""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from collections.abc import Iterable, Mapping
from datetime import UTC, datetime
from importlib import metadata
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.typing import NDArray

from lambdaea.aligneval import AlignmentResult, MetricReport
from lambdaea.enums import EpochKind, Setting
from lambdaea.exceptions import SerializationError
from lambdaea.ipule import DetectionResult, HistoryRecord, IpuleHistory
from lambdaea.logging import get_logger, log_artifact
from lambdaea.priors import ClassPriors

if TYPE_CHECKING:
    from lambdaea.config import ExperimentConfig

logger = get_logger("reports")

DETECTION_FILE = "detection.json"
HISTORY_FILE = "history.csv"
CHECKPOINT_FILE = "checkpoint.lmbd"
SPLIT_FILE = "split.json"
MANIFEST_FILE = "manifest.json"
PAIRS_FILE = "pairs.csv"
METRICS_FILE = "metrics.json"
EMBEDDINGS_FILE = "embeddings.npy"
VERIFY_FILE = "verify.json"

HISTORY_COLUMNS = ("step", "kind", "loss", "pi_p", "pi_p_u", "loss_delta", "preference_gap", "elapsed")


# --------------------------------------------------------------------------- generic io


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def write_json(path: Path | str, data: Any, kind: str = "report") -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(data, indent=2, default=_json_default) + "\n", encoding="utf-8")
    except (OSError, TypeError) as e:
        logger.error("Failed to write %s to %s", kind, target)
        raise SerializationError(f"cannot write {target}: {e}") from e
    log_artifact(logger, kind, target)
    return target


def read_json(path: Path | str) -> Any:
    source = Path(path)
    try:
        return json.loads(source.read_text(encoding="utf-8"))
    except OSError as e:
        raise SerializationError(f"cannot read {source}: {e}") from e
    except json.JSONDecodeError as e:
        raise SerializationError(f"{source} is not valid JSON: {e}") from e


def _write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable[Any]], kind: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        logger.error("Failed to write %s to %s", kind, path)
        raise SerializationError(f"cannot write {path}: {e}") from e
    log_artifact(logger, kind, path)
    return path


# --------------------------------------------------------------------------- detection


def history_to_rows(history: IpuleHistory) -> list[dict[str, Any]]:
    return [
        {
            "step": r.step,
            "kind": r.kind.value,
            "loss": _finite_or_none(r.loss),
            "pi_p": r.pi_p,
            "pi_p_u": r.pi_p_u,
            "loss_delta": _finite_or_none(r.loss_delta),
            "preference_gap": _finite_or_none(r.preference_gap),
            "elapsed": r.elapsed,
        }
        for r in history.records
    ]


def history_from_rows(rows: Iterable[Mapping[str, Any]]) -> IpuleHistory:
    def number(value: Any) -> float:
        return math.nan if value is None or value == "" else float(value)

    return IpuleHistory(
        [
            HistoryRecord(
                step=int(row["step"]),
                kind=EpochKind(row["kind"]),
                loss=number(row["loss"]),
                pi_p=float(row["pi_p"]),
                pi_p_u=float(row["pi_p_u"]),
                loss_delta=number(row.get("loss_delta")),
                preference_gap=number(row.get("preference_gap")),
                elapsed=float(row.get("elapsed") or 0.0),
            )
            for row in rows
        ]
    )


def write_history_csv(history: IpuleHistory, path: Path | str) -> Path:
    rows = (
        ["" if row[c] is None else row[c] for c in HISTORY_COLUMNS] for row in history_to_rows(history)
    )
    return _write_csv(Path(path), HISTORY_COLUMNS, rows, "history")


def detection_to_dict(
    result: DetectionResult, checkpoint: str | None = None, probabilities: bool = True
) -> dict[str, Any]:
    data: dict[str, Any] = {
        "priors": result.priors.to_dict(),
        "alignable": result.alignable,
        "converged": result.converged,
        "n_pos": result.n_pos,
        "n_unlabeled": result.n_unlabeled,
        "n_predicted_matchable": int(result.labels.sum()),
        "checkpoint": checkpoint,
        "history": history_to_rows(result.history),
    }
    if probabilities:
        data["prob_matchable"] = result.prob_matchable.tolist()
    return data


def detection_from_dict(data: Mapping[str, Any]) -> DetectionResult:
    try:
        return DetectionResult(
            prob_matchable=np.asarray(data["prob_matchable"], dtype=np.float64),
            priors=ClassPriors(**data["priors"]),
            history=history_from_rows(data.get("history", [])),
            alignable=bool(data["alignable"]),
            converged=bool(data.get("converged", True)),
            n_pos=int(data.get("n_pos", 0)),
            n_unlabeled=int(data.get("n_unlabeled", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SerializationError(f"malformed detection report: {e}") from e


def read_detection(path: Path | str) -> DetectionResult:
    data = read_json(path)
    if "prob_matchable" not in data:
        raise SerializationError(f"{path} has no per-entity probabilities")
    return detection_from_dict(data)


# --------------------------------------------------------------------------- alignment


def write_pairs_csv(result: AlignmentResult, path: Path | str) -> Path:
    rows = ((src, tgt, f"{score:.8g}") for src, tgt, score in result.pairs)
    return _write_csv(Path(path), ("src_id", "tgt_id", "score"), rows, "pairs")


def read_pairs_csv(path: Path | str) -> list[tuple[int, int, float]]:
    source = Path(path)
    try:
        with source.open(newline="", encoding="utf-8") as fh:
            return [(int(r["src_id"]), int(r["tgt_id"]), float(r["score"])) for r in csv.DictReader(fh)]
    except OSError as e:
        raise SerializationError(f"cannot read {source}: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise SerializationError(f"malformed pairs file {source}: {e}") from e


def write_metrics(report: MetricReport, path: Path | str, setting: Setting | None = None) -> Path:
    return write_json(path, report.to_dict(setting), kind="metrics")


def save_embeddings(table: NDArray[np.float64], path: Path | str) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        np.save(target, np.asarray(table, dtype=np.float32))
    except OSError as e:
        raise SerializationError(f"cannot write {target}: {e}") from e
    log_artifact(logger, "embeddings", target)
    return target


def load_embeddings(path: Path | str) -> NDArray[np.float64]:
    try:
        return np.load(Path(path)).astype(np.float64)
    except (OSError, ValueError) as e:
        raise SerializationError(f"cannot read embeddings from {path}: {e}") from e


# --------------------------------------------------------------------------- manifest


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def build_manifest(command: str, config: ExperimentConfig) -> dict[str, Any]:
    from lambdaea.config import config_hash, config_to_dict

    return {
        "command": command,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "config": config_to_dict(config),
        "versions": {
            "python": sys.version.split()[0],
            "lambdaea": _version("lambdaea"),
            "torch": _version("torch"),
            "numpy": np.__version__,
            "scipy": _version("scipy"),
        },
        "platform": platform.platform(),
        "single_thread": config.single_thread,
        "created": datetime.now(UTC).isoformat(timespec="seconds"),
    }


def write_manifest(out_dir: Path | str, command: str, config: ExperimentConfig) -> Path:
    return write_json(Path(out_dir) / MANIFEST_FILE, build_manifest(command, config), kind="manifest")


# --------------------------------------------------------------------------- plots


def _pyplot() -> Any:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as e:
        raise ImportError("matplotlib is required for plots (install the 'plots' group)") from e
    return plt


def plot_history(history: IpuleHistory, out_dir: Path | str, true_pi_p_u: float | None = None) -> list[Path]:
    """Loss and prior curves plus a histogram of per-iteration loss changes.

    Raises:
        ImportError: matplotlib is not installed
    """
    plt = _pyplot()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    steps = [r.step for r in history.records]
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r.loss for r in history.records], marker=".")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    fig.tight_layout()
    written.append(out / "loss.png")
    fig.savefig(written[-1])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r.pi_p for r in history.records], label="pi_p")
    ax.plot(steps, [r.pi_p_u for r in history.records], label="pi_p_u")
    if true_pi_p_u is not None:
        ax.axhline(true_pi_p_u, linestyle="--", color="grey", label="true pi_p_u")
    ax.set_xlabel("epoch")
    ax.set_ylabel("prior")
    ax.legend()
    fig.tight_layout()
    written.append(out / "priors.png")
    fig.savefig(written[-1])
    plt.close(fig)

    deltas = [r.loss_delta for r in history.em_records() if math.isfinite(r.loss_delta)]
    if deltas:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(deltas, bins=min(30, max(5, len(deltas))))
        ax.set_xlabel("loss change per EM iteration")
        fig.tight_layout()
        written.append(out / "loss_delta.png")
        fig.savefig(written[-1])
        plt.close(fig)

    for path in written:
        log_artifact(logger, "plot", path)
    return written


def maybe_plot_history(history: IpuleHistory, out_dir: Path | str, true_pi_p_u: float | None = None) -> list[Path]:
    try:
        return plot_history(history, out_dir, true_pi_p_u)
    except ImportError as e:
        logger.warning("Skipping plots: %s", e)
        return []
