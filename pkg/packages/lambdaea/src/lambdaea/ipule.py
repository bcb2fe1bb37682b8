"""Iterative positive-unlabeled dangling detection with class-prior estimation.

Training starts with a warm-up that mixes the contrastive alignment loss into the PU loss
under fixed initial priors, then alternates E-steps (re-estimate the unlabeled matchable
prior by counting confident predictions) with short M-steps on the PU loss until the loss
or the prior settles.
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from numpy.typing import NDArray
from torch import Tensor, nn

from lambdaea.aligneval import mutual_nn_pairs, similarity_matrix
from lambdaea.enums import EpochKind, Metric, parse_option
from lambdaea.exceptions import ConfigurationError, ValidationError
from lambdaea.keesa import EmbeddingTable, EncoderConfig, KeesaEncoder, build_encoder, build_graph
from lambdaea.kgdata import AnchorSplit, KGPair
from lambdaea.logging import get_logger, log_epoch, log_performance
from lambdaea.priors import ClassPriors
from lambdaea.trainer import PUSets, Trainer, TrainerConfig

type IdArray = NDArray[np.int64]

logger = get_logger("ipule")

THRESHOLD = 0.5

__all__ = [
    "ClassPriors",
    "DetectionResult",
    "HistoryRecord",
    "IpuleConfig",
    "IpuleHistory",
    "alignability",
    "augment_anchors",
    "classifier_head",
    "e_step",
    "init_priors",
    "preference_gap",
    "run_ipule",
    "trivial_detection",
]


@dataclass(frozen=True)
class IpuleConfig:
    warmup_epochs: int = 10
    max_em_iters: int = 50
    m_step_epochs: int = 5
    tol_loss: float = 1e-4
    tol_prior: float = 1e-3
    patience: int = 3
    tau_align: float = 0.05
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainerConfig = field(default_factory=TrainerConfig)

    def __post_init__(self) -> None:
        if self.warmup_epochs < 0 or self.max_em_iters < 0:
            raise ConfigurationError("ipule epoch and iteration counts must be >= 0")
        if self.m_step_epochs < 1:
            raise ConfigurationError("ipule.m_step_epochs must be >= 1")
        if self.tol_loss <= 0 or self.tol_prior <= 0:
            raise ConfigurationError("ipule tolerances must be positive")
        if self.patience < 1:
            raise ConfigurationError("ipule.patience must be >= 1")
        if not 0.0 <= self.tau_align <= 1.0:
            raise ConfigurationError("ipule.tau_align must lie in [0, 1]")


@dataclass(frozen=True)
class HistoryRecord:
    step: int
    kind: EpochKind
    loss: float
    pi_p: float
    pi_p_u: float
    loss_delta: float = math.nan
    preference_gap: float = math.nan
    elapsed: float = 0.0


@dataclass
class IpuleHistory:
    records: list[HistoryRecord] = field(default_factory=list)

    def record(
        self,
        kind: EpochKind,
        loss: float,
        priors: ClassPriors,
        loss_delta: float = math.nan,
        preference_gap: float = math.nan,
        elapsed: float = 0.0,
    ) -> HistoryRecord:
        step = self.records[-1].step + 1 if self.records else 0
        entry = HistoryRecord(
            step=step,
            kind=kind,
            loss=loss,
            pi_p=priors.pi_p,
            pi_p_u=priors.pi_p_u,
            loss_delta=loss_delta,
            preference_gap=preference_gap,
            elapsed=elapsed,
        )
        self.records.append(entry)
        return entry

    def em_records(self) -> list[HistoryRecord]:
        return [r for r in self.records if r.kind is EpochKind.EM]

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class DetectionResult:
    """Per-entity matchable probabilities over the union id space, with the final priors."""

    prob_matchable: NDArray[np.float64]
    priors: ClassPriors
    history: IpuleHistory
    alignable: bool
    converged: bool = True
    n_pos: int = 0
    n_unlabeled: int = 0
    labels: NDArray[np.bool_] = field(init=False)

    def __post_init__(self) -> None:
        probs = np.asarray(self.prob_matchable, dtype=np.float64)
        if probs.ndim != 1 or ((probs < 0) | (probs > 1)).any():
            raise ValidationError("prob_matchable must be a vector of probabilities")
        self.prob_matchable = probs
        self.labels = probs > THRESHOLD

    @property
    def matchable_ids(self) -> IdArray:
        return np.flatnonzero(self.labels).astype(np.int64)

    @property
    def dangling_ids(self) -> IdArray:
        return np.flatnonzero(~self.labels).astype(np.int64)


# --------------------------------------------------------------------------- primitives


def classifier_head(h_f: Tensor, head: nn.Module) -> tuple[Tensor, Tensor]:
    """``softmax(MLP(h_f))`` split into ``(y(+1), y(-1))``."""
    probs = torch.softmax(head(h_f), dim=-1)
    return probs[..., 0], probs[..., 1]


def init_priors(n_pos: int, n_unlabeled: int) -> ClassPriors:
    """Both priors start at the labeled share ``|P| / (|P| + |U|)``."""
    if n_pos < 1 or n_unlabeled < 1:
        raise ValidationError("init_priors needs at least one positive and one unlabeled entity")
    share = n_pos / (n_pos + n_unlabeled)
    return ClassPriors.from_estimates(pi_p=share, pi_p_u=share, pi_p_tr=share)


def e_step(probs: NDArray[np.float64], n_pos: int, n_unlabeled: int) -> ClassPriors:
    """Re-estimate priors from the unlabeled entities' matchable probabilities.

    Example:
        >>> e_step(np.array([0.9, 0.4, 0.6, 0.2]), 10, 4).pi_p_u
        0.5
    """
    values = np.asarray(probs, dtype=np.float64)
    if values.shape != (n_unlabeled,):
        raise ValidationError(f"expected {n_unlabeled} unlabeled probabilities, got {values.shape}")
    if ((values < 0) | (values > 1)).any():
        raise ValidationError("probabilities must lie in [0, 1]")
    if n_pos < 1 or n_unlabeled < 1:
        raise ValidationError("e_step needs at least one positive and one unlabeled entity")
    pi_p_u = int((values > THRESHOLD).sum()) / n_unlabeled
    total = n_pos + n_unlabeled
    pi_p = (n_pos + n_unlabeled * pi_p_u) / total
    return ClassPriors.from_estimates(pi_p=pi_p, pi_p_u=pi_p_u, pi_p_tr=n_pos / total)


def alignability(priors: ClassPriors, tau_align: float) -> bool:
    return priors.pi_p_u >= tau_align


def preference_gap(probs: NDArray[np.float64], sets: PUSets) -> float:
    """Mean log-odds over the unlabeled set minus mean log-odds over the labeled positives."""
    clipped = np.clip(probs, 1e-12, 1 - 1e-12)
    log_odds = np.log(clipped) - np.log1p(-clipped)
    return float(log_odds[sets.unlabeled].mean() - log_odds[sets.positive].mean())


# --------------------------------------------------------------------------- training loop


@dataclass
class _Snapshot:
    loss: float
    state: dict[str, Tensor]


def _converged(previous: float, current: float, prior_change: float, cfg: IpuleConfig) -> bool:
    loss_change = abs(previous - current) / max(abs(previous), 1e-12)
    return loss_change < cfg.tol_loss or prior_change < cfg.tol_prior


def run_ipule(
    pair: KGPair,
    split: AnchorSplit,
    cfg: IpuleConfig | None = None,
    model: KeesaEncoder | None = None,
) -> tuple[DetectionResult, KeesaEncoder]:
    """Train the encoder and detection head and estimate the matchable priors.

    Args:
        pair: The KG pair; every entity is either a labeled positive or unlabeled
        split: Anchor split; its train part forms the labeled positives
        cfg: Schedule, encoder and optimizer settings
        model: Encoder to continue from; a fresh one is built when omitted

    Returns:
        The detection result and the trained encoder

    Raises:
        ValidationError: The split has no training anchors
        TrainingError: A loss became non-finite
    """
    cfg = cfg or IpuleConfig()
    if len(split.train) == 0:
        raise ValidationError("run_ipule needs at least one training anchor")
    start_time = time.perf_counter()

    graph = build_graph(pair)
    model = model or build_encoder(pair, cfg.encoder, seed=cfg.train.seed)
    trainer = Trainer(model, graph, pair, cfg.train)
    anchors = pair.to_global(split.train)
    sets = PUSets.from_anchors(pair, split.train)
    n_pos, n_unl = len(sets.positive), len(sets.unlabeled)
    priors = init_priors(n_pos, n_unl)
    history = IpuleHistory()

    for epoch in range(cfg.warmup_epochs):
        warm_loss = trainer.warmup_epoch(anchors, sets, priors)
        history.record(EpochKind.WARMUP, warm_loss, priors, elapsed=time.perf_counter() - start_time)
        log_epoch(logger, EpochKind.WARMUP, epoch, warm_loss, priors)

    loss = math.nan
    best: _Snapshot | None = None
    streak = 0
    converged = False
    for iteration in range(cfg.max_em_iters):
        _, probs = trainer.predict()
        updated = e_step(probs[sets.unlabeled], n_pos, n_unl)
        if updated.pi_n <= 0:
            logger.warning("Every unlabeled entity is predicted matchable; stopping EM early")
            break
        previous_loss = loss
        loss = trainer.pu_loss_value(sets, updated)
        prior_change = abs(updated.pi_p - priors.pi_p)
        priors = updated

        if best is None or loss < best.loss:
            best = _Snapshot(loss, copy.deepcopy(model.state_dict()))

        history.record(
            EpochKind.EM,
            loss,
            priors,
            loss_delta=loss - previous_loss,
            preference_gap=preference_gap(probs, sets),
            elapsed=time.perf_counter() - start_time,
        )
        log_epoch(logger, EpochKind.EM, iteration, loss, priors)

        if math.isfinite(previous_loss) and _converged(previous_loss, loss, prior_change, cfg):
            streak += 1
        else:
            streak = 0
        if streak >= cfg.patience:
            converged = True
            logger.info("EM converged after %d iterations (pi_p_u=%.4f)", iteration + 1, priors.pi_p_u)
            break

        for _ in range(cfg.m_step_epochs):
            trainer.pu_epoch(sets, priors)

    if not converged and best is not None:
        logger.warning(
            "EM did not converge in %d iterations; restoring the lowest-loss state (loss=%.6f)",
            cfg.max_em_iters,
            best.loss,
        )
        model.load_state_dict(best.state)

    _, probs = trainer.predict()
    priors = e_step(probs[sets.unlabeled], n_pos, n_unl)
    result = DetectionResult(
        prob_matchable=probs,
        priors=priors,
        history=history,
        alignable=alignability(priors, cfg.tau_align),
        converged=converged,
        n_pos=n_pos,
        n_unlabeled=n_unl,
    )
    log_performance(logger, f"Dangling detection ({len(history)} epochs recorded)", time.perf_counter() - start_time)
    logger.info(
        "Estimated priors: pi_p=%.4f pi_p_u=%.4f alignable=%s",
        priors.pi_p,
        priors.pi_p_u,
        result.alignable,
    )
    return result, model


def trivial_detection(pair: KGPair, split: AnchorSplit) -> DetectionResult:
    """Baseline that calls every unlabeled entity dangling."""
    sets = PUSets.from_anchors(pair, split.train)
    probs = np.zeros(pair.n_entities, dtype=np.float64)
    probs[sets.positive] = 1.0
    priors = e_step(probs[sets.unlabeled], len(sets.positive), len(sets.unlabeled))
    return DetectionResult(
        prob_matchable=probs,
        priors=priors,
        history=IpuleHistory(),
        alignable=False,
        n_pos=len(sets.positive),
        n_unlabeled=len(sets.unlabeled),
    )


def augment_anchors(
    emb: EmbeddingTable | NDArray[np.float64],
    pair: KGPair,
    current_anchors: IdArray,
    detection: DetectionResult | None = None,
    metric: Metric | str = Metric.CSLS,
    k: int = 10,
) -> IdArray:
    """Mutually nearest unanchored pairs, as new local ``(src, tgt)`` anchors.

    Only entities not yet anchored (and predicted matchable, when ``detection`` is given)
    take part.
    """
    table = emb.numpy() if isinstance(emb, EmbeddingTable) else np.asarray(emb, dtype=np.float64)
    current = np.asarray(current_anchors, dtype=np.int64).reshape(-1, 2)
    src_free = np.setdiff1d(np.arange(pair.source.n_entities), current[:, 0])
    tgt_free = np.setdiff1d(np.arange(pair.target.n_entities), current[:, 1])
    if detection is not None:
        src_free = src_free[detection.labels[src_free]]
        tgt_free = tgt_free[detection.labels[tgt_free + pair.target_offset]]
    if len(src_free) == 0 or len(tgt_free) == 0:
        return np.empty((0, 2), dtype=np.int64)
    kind = parse_option(Metric, metric, "metric")
    sim = similarity_matrix(table[src_free], table[tgt_free + pair.target_offset], kind, k)
    matches = mutual_nn_pairs(sim)
    added = np.array([(src_free[i], tgt_free[j]) for i, j, _ in matches], dtype=np.int64)
    logger.debug("Anchor augmentation proposed %d new pairs", len(added))
    return added.reshape(-1, 2)
