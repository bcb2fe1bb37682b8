"""High-level interface tying detection, alignment and evaluation together."""

from __future__ import annotations

import time

import numpy as np
import torch
from numpy.typing import NDArray
from tqdm import tqdm

from lambdaea.aligneval import AlignmentResult, MetricReport, align, evaluate_alignment
from lambdaea.config import ExperimentConfig
from lambdaea.exceptions import NotAlignableError, ValidationError
from lambdaea.ipule import DetectionResult, augment_anchors, run_ipule
from lambdaea.keesa import KeesaEncoder, build_encoder, build_graph, encode
from lambdaea.kgdata import AnchorSplit, KGPair, full_anchor_split, split_anchors
from lambdaea.logging import get_logger, log_performance
from lambdaea.trainer import Trainer

logger = get_logger("pipeline")


def make_split(pair: KGPair, config: ExperimentConfig) -> AnchorSplit:
    """Anchor split for ``config.train_ratio``; a ratio of 1 labels every anchor."""
    if config.train_ratio >= 1.0:
        return full_anchor_split(pair, config.seed)
    return split_anchors(pair, config.train_ratio, config.seed)


def apply_runtime(config: ExperimentConfig) -> None:
    torch.manual_seed(config.seed)
    if config.single_thread:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True, warn_only=True)


class Lambda:
    """Dangling detection followed by alignment of one KG pair.

    Args:
        pair: The KG pair
        config: Resolved experiment configuration
        split: Anchor split; derived from ``config.train_ratio`` and ``config.seed`` when omitted
        model: Encoder to start from, e.g. one restored from a checkpoint

    Example:
        >>> runner = Lambda(pair, load_config(seed=7))
        >>> detection = runner.detect()
        >>> result = runner.align()
        >>> report = runner.evaluate()
    """

    def __init__(
        self,
        pair: KGPair,
        config: ExperimentConfig,
        split: AnchorSplit | None = None,
        model: KeesaEncoder | None = None,
    ) -> None:
        self.pair = pair
        self.config = config
        self.split = split or make_split(pair, config)
        self.split.validate_against(pair)
        self.model = model
        self.detection: DetectionResult | None = None
        self.embeddings: NDArray[np.float64] | None = None
        self.alignment: AlignmentResult | None = None

    def detect(self) -> DetectionResult:
        """Train the encoder and classifier and estimate the matchable priors."""
        detection, self.model = run_ipule(self.pair, self.split, self.config.ipule, self.model)
        self.detection = detection
        return detection

    def train_alignment(self, detection: DetectionResult | None = None, progress: bool = False) -> KeesaEncoder:
        """Contrastive alignment training, with optional mutual-NN anchor augmentation."""
        cfg = self.config
        model = self.model or build_encoder(self.pair, cfg.encoder, seed=cfg.seed)
        trainer = Trainer(model, build_graph(self.pair), self.pair, cfg.train)
        anchors = self.split.train.copy()
        start_time = time.perf_counter()

        for epoch in tqdm(range(cfg.align.align_epochs), desc="align", disable=not progress):
            loss = trainer.alignment_epoch(self.pair.to_global(anchors))
            logger.debug("align epoch %d: loss=%.6f anchors=%d", epoch, loss, len(anchors))
            if cfg.align.augment_every and (epoch + 1) % cfg.align.augment_every == 0:
                table, _ = trainer.predict()
                added = augment_anchors(
                    table, self.pair, anchors, detection, cfg.align.metric, cfg.align.csls_k
                )
                if len(added):
                    anchors = np.concatenate([anchors, added])
                    logger.info("Epoch %d: added %d anchors by mutual nearest neighbors", epoch, len(added))

        log_performance(logger, f"alignment training ({cfg.align.align_epochs} epochs)", time.perf_counter() - start_time)
        self.model = model
        return model

    def align(
        self,
        detection: DetectionResult | None = None,
        force: bool = False,
        progress: bool = False,
    ) -> AlignmentResult:
        """Train for alignment, then pair up entities predicted matchable.

        Raises:
            NotAlignableError: The detection judged the pair not alignable and ``force`` is off
        """
        detection = detection or self.detection
        if detection is not None:
            if len(detection.labels) != self.pair.n_entities:
                raise ValidationError("detection does not cover the pair")
            if not detection.alignable and not force:
                raise NotAlignableError(detection.priors.pi_p_u, self.config.ipule.tau_align)
        self.detection = detection

        model = self.train_alignment(detection, progress=progress)
        self.embeddings = encode(self.pair, model).numpy()
        align_cfg = self.config.align
        self.alignment = align(
            self.embeddings,
            self.pair,
            detection,
            align_cfg.metric,
            align_cfg.csls_k,
            exclude=self.split.train,
            reverse=align_cfg.reverse,
            rank_depth=align_cfg.rank_depth,
        )
        return self.alignment

    def evaluate(self) -> MetricReport:
        if self.embeddings is None:
            raise ValidationError("evaluate() needs embeddings; run align() first")
        align_cfg = self.config.align
        return evaluate_alignment(
            self.embeddings,
            self.pair,
            self.split,
            self.detection,
            align_cfg.metric,
            align_cfg.csls_k,
            reverse=align_cfg.reverse,
        )
