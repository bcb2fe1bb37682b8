from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Sequence

import numpy as np
import torch
from numpy.typing import NDArray

from lambdaea.enums import NegativeStrategy, parse_option
from lambdaea.exceptions import ValidationError
from lambdaea.losses import ContrastiveBatch
from lambdaea.logging import get_logger

type IdArray = NDArray[np.int64]
type Seed = int | np.random.Generator

logger = get_logger("sampling")


def _rng(seed: Seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


class NegativeSampler(ABC):
    """Draws negatives for one (query, positive) anchor at a time."""

    strategy: NegativeStrategy

    def __init__(self, pool: Sequence[int] | IdArray) -> None:
        self.pool = np.unique(np.asarray(pool, dtype=np.int64))

    @abstractmethod
    def candidates(self, anchor: tuple[int, int]) -> IdArray:
        """Ids this sampler may return for ``anchor``."""
        ...

    def sample(self, anchor: tuple[int, int], n: int | None, rng: np.random.Generator) -> IdArray:
        """``n`` distinct candidates, or all of them when fewer exist (or ``n`` is None)."""
        if n is not None and n < 0:
            raise ValidationError("number of negatives must be >= 0")
        candidates = self.candidates(anchor)
        if n is None or n >= len(candidates):
            return candidates
        return rng.choice(candidates, size=n, replace=False)


class UniformSampler(NegativeSampler):
    """Uniform draws from a fixed pool, typically the other graph's entities."""

    strategy = NegativeStrategy.UNIFORM

    def candidates(self, anchor: tuple[int, int]) -> IdArray:
        query, positive = anchor
        return self.pool[(self.pool != positive) & (self.pool != query)]

    def sample(self, anchor: tuple[int, int], n: int | None, rng: np.random.Generator) -> IdArray:
        if n is not None and 0 <= n and n + 2 < len(self.pool) // 2:
            # Oversample the raw pool and filter; avoids materializing the candidate set
            draw = rng.choice(len(self.pool), size=n + 2, replace=False)
            # keep draw order: truncating a sorted draw would favour low ids
            picked = self.pool[draw]
            picked = picked[(picked != anchor[1]) & (picked != anchor[0])]
            return picked[:n]
        return super().sample(anchor, n, rng)


class InBatchSampler(NegativeSampler):
    """Negatives are the other entities of the current anchor batch."""

    strategy = NegativeStrategy.IN_BATCH

    def candidates(self, anchor: tuple[int, int]) -> IdArray:
        query, positive = anchor
        return self.pool[(self.pool != positive) & (self.pool != query)]


def sample_negatives(
    anchor: tuple[int, int],
    pool: Sequence[int] | IdArray,
    n: int | None,
    strategy: NegativeStrategy | str = NegativeStrategy.UNIFORM,
    seed: Seed = 0,
) -> IdArray:
    """Negatives for one anchor.

    Args:
        anchor: ``(query, positive)`` ids
        pool: Candidate ids; for the in-batch strategy, every entity of the anchor batch
        n: Number of negatives wanted; None takes every candidate
        strategy: ``uniform`` or ``in_batch``
        seed: Seed or generator for the draw

    Returns:
        Distinct ids, never the anchor's own query or positive
    """
    kind = parse_option(NegativeStrategy, strategy, "neg_strategy")
    sampler: NegativeSampler = (
        UniformSampler(pool) if kind is NegativeStrategy.UNIFORM else InBatchSampler(pool)
    )
    return sampler.sample(anchor, n, _rng(seed))


def build_contrastive_batch(
    anchors: IdArray,
    n_neg: int | None,
    strategy: NegativeStrategy,
    rng: np.random.Generator,
    source_pool: IdArray,
    target_pool: IdArray,
    lam: float,
    gamma: float,
) -> ContrastiveBatch:
    """Queries in both directions for a batch of union-id anchor pairs.

    Each anchor ``(s, t)`` yields the query rows ``(s, t)`` and ``(t, s)``. Uniform negatives
    for a source query come from ``target_pool`` and vice versa; in-batch negatives come
    from the ``2B - 2`` other entities of the batch.
    """
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1, 2)
    queries = np.concatenate([anchors, anchors[:, ::-1]])
    n_source = len(anchors)
    if strategy is NegativeStrategy.IN_BATCH:
        shared = InBatchSampler(anchors.ravel())
        samplers: tuple[NegativeSampler, NegativeSampler] = (shared, shared)
    else:
        samplers = (UniformSampler(target_pool), UniformSampler(source_pool))

    rows = []
    for idx, (query, positive) in enumerate(queries.tolist()):
        sampler = samplers[0] if idx < n_source else samplers[1]
        rows.append(sampler.sample((query, positive), n_neg, rng))
    width = max((len(r) for r in rows), default=0)
    negatives = np.full((len(rows), width), -1, dtype=np.int64)
    for idx, row in enumerate(rows):
        negatives[idx, : len(row)] = row
    return ContrastiveBatch(
        anchors=torch.as_tensor(queries, dtype=torch.long),
        negatives=torch.as_tensor(negatives, dtype=torch.long),
        lam=lam,
        gamma=gamma,
    )
