"""Similarity, mutual nearest-neighbor alignment and the relaxed/consolidated metrics."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.typing import NDArray
from sklearn.metrics import precision_recall_fscore_support

from lambdaea.enums import Metric, Setting, parse_option
from lambdaea.exceptions import ValidationError
from lambdaea.logging import get_logger

if TYPE_CHECKING:
    from lambdaea.ipule import DetectionResult
    from lambdaea.keesa import EmbeddingTable
    from lambdaea.kgdata import AnchorSplit, KGPair

type IdArray = NDArray[np.int64]
type Matrix = NDArray[np.float64]
type Rankings = Mapping[int, Sequence[int] | IdArray]

logger = get_logger("aligneval")

HITS_AT = (1, 10, 50)


# --------------------------------------------------------------------------- similarity


def _normalize_rows(x: Matrix) -> Matrix:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def cosine_matrix(src_emb: Matrix, tgt_emb: Matrix) -> Matrix:
    src = _normalize_rows(np.asarray(src_emb, dtype=np.float64))
    tgt = _normalize_rows(np.asarray(tgt_emb, dtype=np.float64))
    return src @ tgt.T


def _topk_mean(cos: Matrix, k: int) -> NDArray[np.float64]:
    """Row-wise mean of the ``k`` largest entries."""
    if k >= cos.shape[1]:
        return cos.mean(axis=1)
    top = np.partition(cos, cos.shape[1] - k, axis=1)[:, cos.shape[1] - k :]
    return top.mean(axis=1)


def csls_matrix(src_emb: Matrix, tgt_emb: Matrix, k: int = 10) -> Matrix:
    """Cross-domain similarity local scaling.

    ``CSLS(x, y) = 2 cos(x, y) - r_T(x) - r_S(y)`` where ``r_T(x)`` is the mean cosine of
    ``x`` to its ``k`` nearest targets and ``r_S(y)`` the mean cosine of ``y`` to its ``k``
    nearest sources. ``k`` is clipped per side to the opposite side's size.

    Raises:
        ValidationError: ``k < 1`` or either side is empty
    """
    if k < 1:
        raise ValidationError("csls k must be >= 1")
    if len(src_emb) == 0 or len(tgt_emb) == 0:
        raise ValidationError("csls_matrix needs non-empty source and target embeddings")
    cos = cosine_matrix(src_emb, tgt_emb)
    n_src, n_tgt = cos.shape
    if k > min(n_src, n_tgt):
        logger.warning("CSLS k=%d exceeds the candidate count; clipping to %d / %d", k, n_tgt, n_src)
    r_t = _topk_mean(cos, min(k, n_tgt))
    r_s = _topk_mean(cos.T, min(k, n_src))
    return 2.0 * cos - r_t[:, None] - r_s[None, :]


def similarity_matrix(src_emb: Matrix, tgt_emb: Matrix, metric: Metric | str, k: int = 10) -> Matrix:
    kind = parse_option(Metric, metric, "metric")
    if kind is Metric.CSLS:
        return csls_matrix(src_emb, tgt_emb, k)
    return cosine_matrix(src_emb, tgt_emb)


def mutual_nn_pairs(sim: Matrix) -> list[tuple[int, int, float]]:
    """Row/column index pairs that are each other's argmax; ties go to the lowest index.

    Example:
        >>> mutual_nn_pairs(np.eye(2))
        [(0, 0, 1.0), (1, 1, 1.0)]
    """
    matrix = np.asarray(sim, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValidationError("similarity must be a matrix")
    if matrix.size == 0:
        return []
    if not np.isfinite(matrix).all():
        raise ValidationError("similarity matrix has non-finite entries")
    row_best = matrix.argmax(axis=1)
    col_best = matrix.argmax(axis=0)
    rows = np.flatnonzero(col_best[row_best] == np.arange(matrix.shape[0]))
    return [(int(i), int(row_best[i]), float(matrix[i, row_best[i]])) for i in rows]


def _rank_rows(sim: Matrix, candidates: IdArray, depth: int | None) -> list[IdArray]:
    order = np.argsort(-sim, axis=1, kind="stable")
    if depth is not None:
        order = order[:, :depth]
    return [candidates[row] for row in order]


# --------------------------------------------------------------------------- alignment


@dataclass
class AlignmentResult:
    """Mutual-NN pairs over local ids plus per-source rankings of target candidates."""

    pairs: list[tuple[int, int, float]]
    src_rankings: dict[int, IdArray]
    metric_name: Metric
    empty: bool = False

    def __post_init__(self) -> None:
        sources = [p[0] for p in self.pairs]
        targets = [p[1] for p in self.pairs]
        if len(set(sources)) != len(sources) or len(set(targets)) != len(targets):
            raise ValidationError("alignment pairs must form a matching")
        if not all(math.isfinite(p[2]) for p in self.pairs):
            raise ValidationError("alignment scores must be finite")

    def __len__(self) -> int:
        return len(self.pairs)

    def as_array(self) -> IdArray:
        return np.array([(s, t) for s, t, _ in self.pairs], dtype=np.int64).reshape(-1, 2)


def _table(emb: EmbeddingTable | Matrix) -> Matrix:
    if isinstance(emb, np.ndarray):
        return emb.astype(np.float64, copy=False)
    return emb.numpy()


def _sides(pair: KGPair, reverse: bool) -> tuple[int, int, int, int]:
    """``(src_offset, n_src, tgt_offset, n_tgt)`` rows of the union table."""
    if reverse:
        return pair.target_offset, pair.target.n_entities, 0, pair.source.n_entities
    return 0, pair.source.n_entities, pair.target_offset, pair.target.n_entities


def align(
    emb: EmbeddingTable | Matrix,
    pair: KGPair,
    detection: DetectionResult | None = None,
    metric: Metric | str = Metric.CSLS,
    k: int = 10,
    exclude: IdArray | None = None,
    reverse: bool = False,
    rank_depth: int | None = None,
) -> AlignmentResult:
    """Mutual nearest-neighbor alignment over entities predicted matchable.

    Args:
        emb: Union embedding table, source rows first
        pair: The KG pair the table was computed for
        detection: Detection over the union ids; None treats every entity as matchable
        metric: ``csls`` or ``cosine``
        k: CSLS neighborhood size
        exclude: Local ``(src, tgt)`` anchors to leave out of both sides (training anchors)
        reverse: Align target entities to source entities
        rank_depth: Keep only this many candidates per ranking; None keeps all

    Returns:
        Pairs and rankings over local ids of the aligning direction
    """
    kind = parse_option(Metric, metric, "metric")
    table = _table(emb)
    if len(table) != pair.n_entities:
        raise ValidationError("embedding table does not cover the pair")
    if detection is not None and len(detection.labels) != pair.n_entities:
        raise ValidationError("detection does not cover the pair")

    src_off, n_src, tgt_off, n_tgt = _sides(pair, reverse)
    src_ids = np.arange(n_src, dtype=np.int64)
    tgt_ids = np.arange(n_tgt, dtype=np.int64)
    if exclude is not None and len(exclude):
        held = np.asarray(exclude, dtype=np.int64).reshape(-1, 2)
        if reverse:
            held = held[:, ::-1]
        src_ids = np.setdiff1d(src_ids, held[:, 0])
        tgt_ids = np.setdiff1d(tgt_ids, held[:, 1])
    if detection is not None:
        src_ids = src_ids[detection.labels[src_ids + src_off]]
        tgt_ids = tgt_ids[detection.labels[tgt_ids + tgt_off]]

    if len(src_ids) == 0 or len(tgt_ids) == 0:
        logger.warning("Nothing to align: %d sources, %d targets predicted matchable", len(src_ids), len(tgt_ids))
        return AlignmentResult(pairs=[], src_rankings={}, metric_name=kind, empty=True)

    sim = similarity_matrix(table[src_ids + src_off], table[tgt_ids + tgt_off], kind, k)
    pairs = [(int(src_ids[i]), int(tgt_ids[j]), score) for i, j, score in mutual_nn_pairs(sim)]
    rankings = dict(zip(src_ids.tolist(), _rank_rows(sim, tgt_ids, rank_depth), strict=True))
    logger.info("Aligned %d pairs among %d x %d candidates (%s)", len(pairs), len(src_ids), len(tgt_ids), kind)
    return AlignmentResult(pairs=pairs, src_rankings=rankings, metric_name=kind)


def rank_candidates(
    emb: EmbeddingTable | Matrix,
    pair: KGPair,
    sources: IdArray,
    candidates: IdArray,
    metric: Metric | str = Metric.CSLS,
    k: int = 10,
    reverse: bool = False,
) -> dict[int, IdArray]:
    """Full rankings of ``candidates`` for each of ``sources`` (local ids)."""
    table = _table(emb)
    src_off, _, tgt_off, _ = _sides(pair, reverse)
    sources = np.asarray(sources, dtype=np.int64)
    candidates = np.asarray(candidates, dtype=np.int64)
    if len(sources) == 0 or len(candidates) == 0:
        return {}
    sim = similarity_matrix(table[sources + src_off], table[candidates + tgt_off], metric, k)
    return dict(zip(sources.tolist(), _rank_rows(sim, candidates, None), strict=True))


# --------------------------------------------------------------------------- metrics


def hits_at_k(rankings: Rankings, truth: Mapping[int, int] | IdArray, k: int) -> float:
    """Fraction of truth sources whose counterpart is among the first ``k`` candidates.

    Raises:
        ValidationError: ``k < 1`` or a truth source has no ranking
    """
    if k < 1:
        raise ValidationError("K must be >= 1")
    if isinstance(truth, Mapping):
        items = list(truth.items())
    else:
        items = [(int(s), int(t)) for s, t in np.asarray(truth, dtype=np.int64).reshape(-1, 2)]
    if not items:
        return 0.0
    hits = 0
    for src, tgt in items:
        if src not in rankings:
            raise ValidationError(f"no ranking for source entity {src}")
        top = np.asarray(rankings[src])[:k]
        hits += int(tgt in top)
    return hits / len(items)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    def __post_init__(self) -> None:
        for name in ("precision", "recall", "f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name}={value} outside [0, 1]")

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> PRF:
        total = precision + recall
        f1 = 2.0 * precision * recall / total if total > 0 else 0.0
        return cls(precision=precision, recall=recall, f1=f1)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def _as_mask(values: NDArray[Any] | Sequence[bool]) -> NDArray[np.bool_]:
    return np.asarray(values, dtype=bool)


def detection_prf(labels: NDArray[np.bool_] | Sequence[bool], truth: NDArray[np.bool_] | Sequence[bool]) -> PRF:
    """Precision, recall and F1 of a binary labelling with ``True`` as the positive class.

    Pass dangling masks to score dangling detection.
    """
    predicted = _as_mask(labels)
    actual = _as_mask(truth)
    if predicted.shape != actual.shape:
        raise ValidationError("labels and truth must cover the same universe")
    if not predicted.any():
        logger.warning("No positives predicted; precision is reported as 0")
        if predicted.size == 0:
            return PRF(0.0, 0.0, 0.0)
    precision, recall, f1, _ = precision_recall_fscore_support(
        actual.ravel().astype(np.int64),
        predicted.ravel().astype(np.int64),
        pos_label=1,
        average="binary",
        zero_division=0,
    )
    return PRF(precision=float(precision), recall=float(recall), f1=float(f1))


def consolidated_alignment_prf(det_precision: float, det_recall: float, h1_t11: float) -> PRF:
    """Alignment precision and recall discounted by detection errors.

    A source entity that is dangling but predicted matchable always counts as misaligned,
    as does a matchable entity predicted dangling.

    Example:
        >>> consolidated_alignment_prf(0.8, 0.9, 0.5).precision
        0.4
    """
    for name, value in (("det_precision", det_precision), ("det_recall", det_recall), ("h1_t11", h1_t11)):
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{name}={value} outside [0, 1]")
    return PRF.from_pr(det_precision * h1_t11, det_recall * h1_t11)


@dataclass
class MetricReport:
    detection: PRF | None = None
    alignment_relaxed: dict[str, float] = field(default_factory=dict)
    alignment_consolidated: PRF | None = None
    consolidated_hits: dict[str, float] = field(default_factory=dict)
    h1_t11: float | None = None

    def __post_init__(self) -> None:
        for name, value in (*self.alignment_relaxed.items(), *self.consolidated_hits.items()):
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name}={value} outside [0, 1]")

    def to_dict(self, setting: Setting | None = None) -> dict[str, Any]:
        data: dict[str, Any] = {
            "detection": self.detection.to_dict() if self.detection else None,
        }
        if setting in (None, Setting.RELAXED):
            data["alignment_relaxed"] = dict(self.alignment_relaxed)
        if setting in (None, Setting.CONSOLIDATED):
            data["alignment_consolidated"] = (
                self.alignment_consolidated.to_dict() if self.alignment_consolidated else None
            )
            data["consolidated_hits"] = dict(self.consolidated_hits)
            data["h1_t11"] = self.h1_t11
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MetricReport:
        def prf(value: Mapping[str, float] | None) -> PRF | None:
            return PRF(**value) if value else None

        return cls(
            detection=prf(data.get("detection")),
            alignment_relaxed=dict(data.get("alignment_relaxed") or {}),
            alignment_consolidated=prf(data.get("alignment_consolidated")),
            consolidated_hits=dict(data.get("consolidated_hits") or {}),
            h1_t11=data.get("h1_t11"),
        )


def _hits_block(rankings: Rankings, truth: IdArray, ks: Sequence[int]) -> dict[str, float]:
    return {f"hits@{k}": hits_at_k(rankings, truth, k) for k in ks}


def evaluate_alignment(
    emb: EmbeddingTable | Matrix,
    pair: KGPair,
    split: AnchorSplit,
    detection: DetectionResult | None = None,
    metric: Metric | str = Metric.CSLS,
    k: int = 10,
    reverse: bool = False,
    ks: Sequence[int] = HITS_AT,
) -> MetricReport:
    """Relaxed Hits@K over held-out anchors, plus the consolidated metrics when a detection
    is given.

    Relaxed: each held-out source ranks the held-out targets only. Consolidated: the universe
    is every source entity outside the training anchors; detection is scored with dangling as
    the positive class, Hits@K ranks every non-training target (dangling included), and
    ``H@1_t11`` is the top-1 accuracy of truly matchable sources predicted matchable against
    the targets predicted matchable.
    """
    view = pair.reversed() if reverse else pair
    test = split.test[:, ::-1] if reverse else split.test
    train = split.train[:, ::-1] if reverse else split.train
    src_off = pair.target_offset if reverse else 0
    tgt_off = 0 if reverse else pair.target_offset

    relaxed = rank_candidates(emb, pair, test[:, 0], test[:, 1], metric, k, reverse)
    report = MetricReport(alignment_relaxed=_hits_block(relaxed, test, ks) if len(test) else {})
    if detection is None:
        return report

    universe = np.setdiff1d(np.arange(view.source.n_entities), train[:, 0])
    tgt_pool = np.setdiff1d(np.arange(view.target.n_entities), train[:, 1])
    true_dangling = np.isin(universe, view.dangling_src())
    predicted_matchable = detection.labels[universe + src_off]
    report.detection = detection_prf(~predicted_matchable, true_dangling)
    matchable = detection_prf(predicted_matchable, ~true_dangling)

    if len(test):
        consolidated = rank_candidates(emb, pair, test[:, 0], tgt_pool, metric, k, reverse)
        report.consolidated_hits = _hits_block(consolidated, test, ks)

    kept = test[detection.labels[test[:, 0] + src_off]]
    tgt_kept = tgt_pool[detection.labels[tgt_pool + tgt_off]]
    if len(kept) and len(tgt_kept):
        ranking = rank_candidates(emb, pair, kept[:, 0], tgt_kept, metric, k, reverse)
        report.h1_t11 = hits_at_k(ranking, kept, 1)
    else:
        report.h1_t11 = 0.0
    report.alignment_consolidated = consolidated_alignment_prf(
        matchable.precision, matchable.recall, report.h1_t11
    )
    return report
