from __future__ import annotations

import io
import logging
from collections.abc import Iterator

import numpy as np
import pytest

from lambdaea.config import ExperimentConfig, load_config
from lambdaea.ipule import IpuleConfig
from lambdaea.keesa import EncoderConfig
from lambdaea.kgdata import KGPair, SyntheticConfig, TripleStore, gen_synthetic_pair
from lambdaea.logging import ROOT_LOGGER, configure_logging
from lambdaea.trainer import TrainerConfig

SMALL_SYNTH = SyntheticConfig(
    n_match=30,
    n_dang_src=10,
    n_dang_tgt=15,
    n_relations=3,
    community_count=3,
    intra_edge_prob=0.3,
    seed=0,
)

TINY_ENCODER = EncoderConfig(dim=8, depth=2, n_proxy=4, dropout=0.0, clf_hidden=8)

# Same sizes as SMALL_SYNTH and TINY_ENCODER, as configuration overrides
TINY_OVERRIDES = [
    "encoder.dim=8",
    "encoder.n_proxy=4",
    "encoder.dropout=0.0",
    "encoder.clf_hidden=8",
    "train.lr=0.01",
    "train.batch=64",
    "ipule.warmup_epochs=2",
    "ipule.max_em_iters=2",
    "ipule.m_step_epochs=1",
    "align.align_epochs=2",
    "synth.n_match=30",
    "synth.n_dang_src=10",
    "synth.n_dang_tgt=15",
    "synth.n_relations=3",
    "synth.community_count=3",
    "synth.intra_edge_prob=0.3",
]


@pytest.fixture
def small_pair() -> KGPair:
    return gen_synthetic_pair(SMALL_SYNTH)


@pytest.fixture
def toy_pair() -> KGPair:
    """Three source and four target entities; anchors (0, 1) and (1, 0)."""
    source = TripleStore.from_triples([(0, 0, 1), (1, 1, 2)], 3, 2)
    target = TripleStore.from_triples([(1, 0, 0), (0, 1, 2), (2, 0, 3)], 4, 2)
    return KGPair(source, target, anchors=np.array([[0, 1], [1, 0]]), shared_relations=True)


@pytest.fixture
def fast_ipule() -> IpuleConfig:
    return IpuleConfig(
        warmup_epochs=3,
        max_em_iters=3,
        m_step_epochs=1,
        encoder=TINY_ENCODER,
        train=TrainerConfig(lr=0.01, batch=64, seed=0),
    )


@pytest.fixture
def log_stream() -> Iterator[io.StringIO]:
    """Captures ``lambdaea`` log output (the package logger does not propagate)."""
    stream = io.StringIO()
    configure_logging(logging.DEBUG, handler=logging.StreamHandler(stream), use_colors=False)
    yield stream
    logging.getLogger(ROOT_LOGGER).handlers.clear()


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return load_config(overrides=TINY_OVERRIDES, environ={}, seed=0)
