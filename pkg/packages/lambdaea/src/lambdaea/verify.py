"""Self-check suites behind ``lambda-ea verify``.

Each check returns an :class:`OracleReport`; a suite passes when every report does.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable

import numpy as np
import torch
from torch import Tensor
from torch_geometric.utils import scatter

from lambdaea.enums import VerifySuite, parse_option
from lambdaea.keesa import (
    EncoderConfig,
    KeesaEncoder,
    build_encoder,
    build_graph,
    encode,
    householder,
    orth_penalty,
)
from lambdaea.kgdata import KGPair, TripleStore
from lambdaea.logging import get_logger, log_performance
from lambdaea.losses import (
    ContrastiveBatch,
    infonce,
    pu_loss,
    risk_terms,
    similarity,
    spectral_contrastive_loss,
    tuns_bound_check,
)
from lambdaea.oracles import (
    GaussianPUWorld,
    OracleReport,
    decimal_infonce,
    fd_gradient,
    mc_unbiasedness,
    variance_compare,
)
from lambdaea.priors import ClassPriors

logger = get_logger("verify")

GRADIENT_RTOL = 1e-4
GRADIENT_ATOL = 1e-7


def toy_pair() -> KGPair:
    """Two 3-entity graphs over 2 shared relations, with two anchors."""
    source = TripleStore.from_triples([(0, 0, 1), (1, 1, 2), (2, 0, 0)], 3, 2)
    target = TripleStore.from_triples([(0, 0, 1), (1, 1, 2), (0, 1, 2)], 3, 2)
    return KGPair(source, target, anchors=np.array([[0, 0], [1, 1]]), shared_relations=True)


def _toy_encoder(pair: KGPair, seed: int) -> KeesaEncoder:
    config = EncoderConfig(dim=4, depth=2, n_proxy=3, dropout=0.0, clf_hidden=5)
    model = build_encoder(pair, config, seed=seed).double()
    model.eval()
    return model


# --------------------------------------------------------------------------- lemmas


def check_infonce_identity(seed: int = 0, instances: int = 100) -> OracleReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        lam = float(rng.choice([1.0, 30.0]))
        n = int(rng.choice([1, 5, 50]))
        q = torch.as_tensor(rng.normal(size=8))
        p = torch.as_tensor(rng.normal(size=8))
        negs = torch.as_tensor(rng.normal(size=(n, 8)))
        value = float(infonce(q, p, negs, lam))
        s_pos = float(similarity(q, p))
        s_neg = similarity(q.unsqueeze(0), negs).tolist()
        reference = decimal_infonce(s_pos, s_neg, lam, digits=400)
        worst = max(worst, abs(value - reference) / max(abs(reference), 1e-300))
    return OracleReport("infonce_identity", worst, 0.0, 0.0, worst < 1e-9)


def check_lse_sandwich(seed: int = 0, instances: int = 100) -> OracleReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        lam = float(rng.choice([1.0, 30.0]))
        n = int(rng.choice([1, 5, 50]))
        h = rng.uniform(0.0, 3.0, size=n)
        lse, peak = tuns_bound_check(h, lam)
        worst = max(worst, peak - lse, lse - (peak + math.log(n) / lam))

    lse, peak = tuns_bound_check([1.7], 30.0)
    worst = max(worst, abs(lse - peak))
    for n in (5, 50):
        lse, peak = tuns_bound_check(np.full(n, 0.8), 30.0)
        worst = max(worst, abs(lse - (peak + math.log(n) / 30.0)))
    return OracleReport("lse_sandwich", worst, 0.0, 0.0, worst <= 1e-12)


# --------------------------------------------------------------------------- PU risk


def check_unbiasedness(world: GaussianPUWorld, name: str, loss: str = "zero_one") -> OracleReport:
    result = mc_unbiasedness(world, 500, 500, 1000, loss=loss)  # type: ignore[arg-type]
    return OracleReport(name, result.mean_estimate, result.std_error, result.true_risk, result.within(3.0))


def check_variance_order(trials: int = 20, required: int = 19) -> OracleReport:
    wins = 0
    for trial in range(trials):
        world = GaussianPUWorld.from_labeled_ratio(0.6, 0.3, seed=trial)
        comparison = variance_compare(world, 500, 500, 1000)
        wins += int(comparison.var_ours < comparison.var_nn)
    return OracleReport("variance_order", wins / trials, 0.0, required / trials, wins >= required)


# --------------------------------------------------------------------------- gradients


def check_gradient(name: str, param: Tensor, loss_fn: Callable[[], Tensor], eps: float = 1e-5) -> OracleReport:
    """Compare ``autograd`` against central differences for one parameter tensor."""
    analytic = torch.autograd.grad(loss_fn(), param)[0].detach().numpy().copy()
    original = param.detach().clone()

    def evaluate(values: np.ndarray) -> float:
        with torch.no_grad():
            param.copy_(torch.from_numpy(values))
            return float(loss_fn())

    try:
        numeric = fd_gradient(evaluate, original.numpy().copy(), eps)
    finally:
        with torch.no_grad():
            param.copy_(original)
    error = np.abs(analytic - numeric)
    allowed = GRADIENT_RTOL * np.maximum(np.abs(analytic), np.abs(numeric)) + GRADIENT_ATOL
    return OracleReport(f"gradient_{name}", float(error.max()), 0.0, 0.0, bool((error <= allowed).all()))


def gradient_reports(seed: int = 0) -> list[OracleReport]:
    pair = toy_pair()
    graph = build_graph(pair)
    model = _toy_encoder(pair, seed)
    anchors = pair.to_global(pair.anchors)
    batch = ContrastiveBatch(
        anchors=torch.as_tensor(np.concatenate([anchors, anchors[:, ::-1]])),
        negatives=torch.as_tensor([[4, 5], [3, 5], [1, 2], [0, 2]]),
        lam=10.0,
        gamma=1.0,
    )
    positive = torch.as_tensor(np.unique(anchors))
    unlabeled = torch.as_tensor(np.setdiff1d(np.arange(pair.n_entities), anchors))
    priors = ClassPriors.from_estimates(pi_p=5 / 6, pi_p_u=0.5, pi_p_tr=4 / 6)

    def info() -> Tensor:
        return spectral_contrastive_loss(batch, model(graph).final)

    def pu() -> Tensor:
        table = model(graph)
        prob = torch.softmax(model.classify(table.final), dim=-1)[:, 0]
        return pu_loss(risk_terms(prob, positive, unlabeled), priors)  # type: ignore[return-value]

    def orth() -> Tensor:
        return orth_penalty(model.rel_proj)

    with torch.no_grad():
        # move away from the orthogonal init so the penalty has a gradient
        noise = torch.randn(4, 4, generator=torch.Generator().manual_seed(seed))
        model.rel_proj.add_(0.1 * noise.double())
    return [
        check_gradient("info_entities", model.ent_emb, info),
        check_gradient("info_relations", model.rel_emb, info),
        check_gradient("pu_entities", model.ent_emb, pu),
        check_gradient("pu_head", model.clf_head[2].weight, pu),
        check_gradient("orth", model.rel_proj, orth),
    ]


# --------------------------------------------------------------------------- structure


def check_householder(seed: int = 0, instances: int = 100, dim: int = 16) -> OracleReport:
    rng = np.random.default_rng(seed)
    eye = torch.eye(dim, dtype=torch.float64)
    worst = 0.0
    for _ in range(instances):
        u = torch.as_tensor(rng.normal(size=dim))
        u = u / u.norm()
        w = householder(u, eye)
        worst = max(worst, float((w.T @ w - eye).abs().max()))
    return OracleReport("householder_orthogonal", worst, 0.0, 0.0, worst < 1e-6)


def structure_reports(seed: int = 0) -> list[OracleReport]:
    rng = np.random.default_rng(seed)
    n_src, n_tgt, n_rel = 12, 10, 3
    src_triples = rng.integers(0, [n_src, n_rel, n_src], size=(30, 3))
    tgt_triples = rng.integers(0, [n_tgt, n_rel, n_tgt], size=(25, 3))
    pair = KGPair(
        TripleStore.from_triples(src_triples, n_src, n_rel),
        TripleStore.from_triples(tgt_triples, n_tgt, n_rel),
        anchors=np.array([[i, i] for i in range(6)]),
    )
    model = build_encoder(pair, EncoderConfig(dim=8, depth=2, n_proxy=4), seed=seed)
    graph = build_graph(pair)

    with torch.no_grad():
        alpha = model.attention(graph)
    heads = graph.edges[:, 0]
    sums = scatter(alpha, heads, dim=0, dim_size=graph.n_entities, reduce="sum")
    has_edges = torch.bincount(heads, minlength=graph.n_entities) > 0
    attn_err = float((sums[has_edges] - 1.0).abs().max())

    first = encode(pair, model).final
    second = encode(pair, model).final
    determinism_err = float((first - second).abs().max())

    shuffled = KGPair(
        TripleStore(pair.source.triples[rng.permutation(len(pair.source))], n_src, n_rel),
        TripleStore(pair.target.triples[rng.permutation(len(pair.target))], n_tgt, n_rel),
        anchors=pair.anchors,
    )
    order_err = float((encode(shuffled, model).final - first).abs().max())
    return [
        check_householder(seed),
        OracleReport("attention_normalized", attn_err, 0.0, 0.0, attn_err < 1e-6),
        OracleReport("encode_deterministic", determinism_err, 0.0, 0.0, determinism_err == 0.0),
        OracleReport("triple_order_invariant", order_err, 0.0, 0.0, order_err == 0.0),
    ]


# --------------------------------------------------------------------------- suites


def _suite_reports(suite: VerifySuite, seed: int) -> list[OracleReport]:
    match suite:
        case VerifySuite.LEMMAS:
            return [check_infonce_identity(seed), check_lse_sandwich(seed)]
        case VerifySuite.PU:
            return [
                check_unbiasedness(GaussianPUWorld.from_labeled_ratio(0.6, 0.3, seed=seed), "unbiased_zero_one"),
                check_unbiasedness(GaussianPUWorld(pi_p=0.6, pi_p_u=0.0, seed=seed), "unbiased_all_negative_unlabeled"),
                check_unbiasedness(
                    GaussianPUWorld.from_labeled_ratio(0.6, 0.3, seed=seed), "unbiased_logistic", loss="logistic"
                ),
                check_variance_order(),
            ]
        case VerifySuite.GRADIENTS:
            return gradient_reports(seed)
        case VerifySuite.STRUCTURE:
            return structure_reports(seed)
        case VerifySuite.ALL:
            return [
                report
                for part in (VerifySuite.LEMMAS, VerifySuite.PU, VerifySuite.GRADIENTS, VerifySuite.STRUCTURE)
                for report in _suite_reports(part, seed)
            ]


def run_suite(suite: VerifySuite | str, seed: int = 0) -> list[OracleReport]:
    """Run one verification suite (or ``all``).

    Raises:
        OptionNotSupportedError: Unknown suite name
    """
    kind = parse_option(VerifySuite, suite, "suite")
    start_time = time.perf_counter()
    reports = _suite_reports(kind, seed)
    for report in reports:
        log = logger.info if report.passed else logger.error
        status = "pass" if report.passed else "FAIL"
        log("%-34s %s (estimate=%.3g, truth=%.3g)", report.name, status, report.estimate, report.truth)
    log_performance(logger, f"verify {kind}", time.perf_counter() - start_time)
    return reports
