"""Optimizer ownership and the per-epoch objectives shared by detection and alignment."""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
import torch
from numpy.typing import NDArray
from torch import Tensor

from lambdaea.enums import NegativeStrategy, parse_option
from lambdaea.exceptions import ConfigurationError, TrainingError
from lambdaea.keesa import EmbeddingTable, GraphIndex, KeesaEncoder, orth_penalty
from lambdaea.kgdata import KGPair
from lambdaea.logging import get_logger
from lambdaea.losses import (
    RiskTerms,
    combined_warmup_loss,
    pu_loss,
    risk_terms,
    spectral_contrastive_loss,
)
from lambdaea.priors import ClassPriors
from lambdaea.sampling import build_contrastive_batch

type IdArray = NDArray[np.int64]

logger = get_logger("trainer")


@dataclass(frozen=True)
class TrainerConfig:
    lr: float = 0.005
    batch: int = 5120
    gamma: float = 1.0
    lam: float = 30.0
    beta: float = 1e-3
    mu_o: float = 0.1
    neg_strategy: NegativeStrategy = NegativeStrategy.IN_BATCH
    n_neg: int | None = None
    rescale_h: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "neg_strategy", parse_option(NegativeStrategy, self.neg_strategy, "train.neg_strategy")
        )
        if self.lr <= 0:
            raise ConfigurationError("train.lr must be positive")
        if self.batch < 1:
            raise ConfigurationError("train.batch must be >= 1")
        if self.gamma < 0:
            raise ConfigurationError("train.gamma must be >= 0")
        if self.lam <= 0:
            raise ConfigurationError("train.lam must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError("train.beta must lie in [0, 1]")
        if self.mu_o < 0:
            raise ConfigurationError("train.mu_o must be >= 0")
        if self.n_neg is not None and self.n_neg < 0:
            raise ConfigurationError("train.n_neg must be >= 0")


@dataclass(frozen=True)
class PUSets:
    """Labeled-positive and unlabeled entity ids in the union id space."""

    positive: IdArray
    unlabeled: IdArray

    @classmethod
    def from_anchors(cls, pair: KGPair, anchors: IdArray) -> PUSets:
        positive = np.unique(pair.to_global(anchors).ravel())
        unlabeled = np.setdiff1d(np.arange(pair.n_entities), positive)
        return cls(positive=positive, unlabeled=unlabeled)


class Trainer:
    """Runs optimizer steps for one encoder over one pair.

    Every step does a full-graph forward pass; anchor batches only split the contrastive
    term. The optimizer is RMSprop.
    """

    def __init__(
        self, model: KeesaEncoder, graph: GraphIndex, pair: KGPair, config: TrainerConfig
    ) -> None:
        self.model = model
        self.graph = graph
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        torch.manual_seed(config.seed)
        self.optimizer = torch.optim.RMSprop(model.parameters(), lr=config.lr)
        self.source_pool = np.arange(pair.source.n_entities, dtype=np.int64)
        self.target_pool = np.arange(pair.target.n_entities, dtype=np.int64) + pair.target_offset
        self.steps = 0

    # ------------------------------------------------------------------ objectives

    def anchor_batches(self, anchors: IdArray) -> Iterator[IdArray]:
        order = self.rng.permutation(len(anchors))
        for start in range(0, len(anchors), self.config.batch):
            yield anchors[order[start : start + self.config.batch]]

    def info_loss(self, table: EmbeddingTable, anchors: IdArray) -> Tensor:
        cfg = self.config
        batch = build_contrastive_batch(
            anchors,
            cfg.n_neg,
            cfg.neg_strategy,
            self.rng,
            self.source_pool,
            self.target_pool,
            lam=cfg.lam,
            gamma=cfg.gamma,
        )
        return spectral_contrastive_loss(batch, table.final, rescale_h=cfg.rescale_h)

    def risk(self, table: EmbeddingTable, sets: PUSets) -> RiskTerms:
        prob_pos = torch.softmax(self.model.classify(table.final), dim=-1)[:, 0]
        return risk_terms(
            prob_pos,
            torch.as_tensor(sets.positive, dtype=torch.long),
            torch.as_tensor(sets.unlabeled, dtype=torch.long),
        )

    def orth_loss(self) -> Tensor:
        return orth_penalty(self.model.rel_proj)

    # ------------------------------------------------------------------ steps

    def step(self, loss: Tensor, stage: str, **components: float) -> float:
        value = float(loss.detach())
        if not math.isfinite(value):
            detail = ", ".join(f"{k}={v:.6g}" for k, v in components.items())
            raise TrainingError(f"non-finite loss in {stage} at step {self.steps} ({detail})")
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.steps += 1
        return value

    def warmup_epoch(self, anchors: IdArray, sets: PUSets, priors: ClassPriors) -> float:
        """``beta * L_info + (1 - beta) * L_pu + mu_o * L_o`` per anchor batch."""
        cfg = self.config
        self.model.train()
        losses = []
        for chunk in self.anchor_batches(anchors):
            table = self.model(self.graph)
            l_info = self.info_loss(table, chunk)
            l_pu = pu_loss(self.risk(table, sets), priors)
            l_o = self.orth_loss()
            loss = combined_warmup_loss(l_info, l_pu, l_o, cfg.beta, cfg.mu_o)
            losses.append(
                self.step(
                    loss,  # type: ignore[arg-type]
                    "warmup",
                    l_info=float(l_info),
                    l_pu=float(l_pu),  # type: ignore[arg-type]
                    l_o=float(l_o),
                )
            )
        return float(np.mean(losses)) if losses else math.nan

    def pu_epoch(self, sets: PUSets, priors: ClassPriors) -> float:
        """One M-step epoch on ``L_pu + mu_o * L_o``."""
        self.model.train()
        table = self.model(self.graph)
        l_pu = pu_loss(self.risk(table, sets), priors)
        l_o = self.orth_loss()
        loss = l_pu + self.config.mu_o * l_o  # type: ignore[operator]
        return self.step(loss, "m-step", l_pu=float(l_pu), l_o=float(l_o))  # type: ignore[arg-type]

    def alignment_epoch(self, anchors: IdArray) -> float:
        """One epoch on ``L_info + mu_o * L_o``."""
        self.model.train()
        losses = []
        for chunk in self.anchor_batches(anchors):
            table = self.model(self.graph)
            l_info = self.info_loss(table, chunk)
            l_o = self.orth_loss()
            loss = l_info + self.config.mu_o * l_o
            losses.append(self.step(loss, "alignment", l_info=float(l_info), l_o=float(l_o)))
        return float(np.mean(losses)) if losses else math.nan

    # ------------------------------------------------------------------ evaluation

    @torch.no_grad()
    def predict(self) -> tuple[EmbeddingTable, NDArray[np.float64]]:
        """Embeddings and matchable probabilities with dropout off."""
        self.model.eval()
        table = self.model(self.graph)
        prob = torch.softmax(self.model.classify(table.final), dim=-1)[:, 0]
        return table, prob.detach().cpu().to(torch.float64).numpy()

    @torch.no_grad()
    def pu_loss_value(self, sets: PUSets, priors: ClassPriors) -> float:
        self.model.eval()
        table = self.model(self.graph)
        return float(pu_loss(self.risk(table, sets), priors))  # type: ignore[arg-type]
