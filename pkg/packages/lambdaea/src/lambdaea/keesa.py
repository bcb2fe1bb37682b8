"""Selective-aggregation KG encoder.

One encoder embeds both graphs of a pair into a single table. Each layer aggregates
Householder-reflected neighbor states weighted by relation-projection attention and gated by
a learnable per-entity indicator; the concatenated layer stack is fused with a proxy-matching
view through a sigmoid gate, and the indicator itself is appended as the last coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from numpy.typing import NDArray
from torch import Tensor, nn
from torch_geometric.utils import scatter, softmax

from lambdaea.enums import DropoutTarget, parse_option
from lambdaea.exceptions import ConfigurationError, ValidationError
from lambdaea.kgdata import KGPair
from lambdaea.logging import get_logger

logger = get_logger("keesa")

__all__ = [
    "EmbeddingTable",
    "EncoderConfig",
    "GraphIndex",
    "KeesaEncoder",
    "attention_coeffs",
    "build_encoder",
    "build_graph",
    "encode",
    "gate_fuse",
    "householder",
    "intra_repr",
    "layer_forward",
    "orth_penalty",
    "proxy_attention",
    "relation_project",
    "segment_softmax",
]


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 128
    depth: int = 2
    n_proxy: int = 64
    dropout: float = 0.3
    dropout_on: DropoutTarget = DropoutTarget.INPUTS
    clf_hidden: int = 64
    use_indicator: bool = True
    use_rel_proj: bool = True
    indicator_init: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "dropout_on", parse_option(DropoutTarget, self.dropout_on, "encoder.dropout_on")
        )
        if self.dim < 1:
            raise ConfigurationError("encoder.dim must be >= 1")
        if self.depth < 0:
            raise ConfigurationError("encoder.depth must be >= 0")
        if self.n_proxy < 1:
            raise ConfigurationError("encoder.n_proxy must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("encoder.dropout must lie in [0, 1)")
        if self.clf_hidden < 1:
            raise ConfigurationError("encoder.clf_hidden must be >= 1")


@dataclass(frozen=True)
class GraphIndex:
    """Edges of the union graph as ``(i, k, j)`` rows: entity ``i`` receives from ``j`` via ``k``.

    Every triple contributes both directions; rows are sorted so that the reduction order,
    and therefore the encoder output, does not depend on the order triples were given in.
    """

    edges: Tensor
    n_entities: int
    n_relations: int

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])


def build_graph(pair: KGPair) -> GraphIndex:
    triples = pair.union_triples()
    forward = triples
    backward = triples[triples[:, 0] != triples[:, 2]][:, [2, 1, 0]]
    edges = np.unique(np.concatenate([forward, backward]), axis=0) if len(triples) else triples
    return GraphIndex(
        edges=torch.as_tensor(edges, dtype=torch.long).reshape(-1, 3),
        n_entities=pair.n_entities,
        n_relations=pair.n_relations,
    )


@dataclass
class EmbeddingTable:
    """Final per-entity vectors ``h^f`` plus, optionally, the per-layer states."""

    final: Tensor
    layers: list[Tensor] | None = None

    @property
    def width(self) -> int:
        return int(self.final.shape[-1])

    def indicator(self) -> Tensor:
        return self.final[:, -1]

    def numpy(self) -> NDArray[np.float64]:
        return self.final.detach().cpu().to(torch.float64).numpy()


# --------------------------------------------------------------------------- primitive ops


def relation_project(rel_vec: Tensor, r_e: Tensor | float, rel_proj: Tensor) -> Tensor:
    """``r_e * (W_r @ rel_vec)``; batched over leading dimensions of ``rel_vec`` and ``r_e``."""
    projected = rel_vec @ rel_proj.T
    if isinstance(r_e, Tensor) and r_e.dim() > 0:
        return r_e.unsqueeze(-1) * projected
    return r_e * projected


def segment_softmax(logits: Tensor, index: Tensor, n_segments: int) -> Tensor:
    """Softmax of ``logits`` within groups sharing the same ``index``."""
    return softmax(logits, index, num_nodes=n_segments)


def attention_coeffs(
    edges: Tensor,
    rel_emb: Tensor,
    indicator: Tensor,
    rel_proj: Tensor,
    attn_vec: Tensor,
    n_entities: int,
    use_rel_proj: bool = True,
) -> Tensor:
    """Per-edge attention, normalized over each receiving entity's incident edges.

    Logits are ``v . (r_j W_r h_k)`` for edge ``(i, k, j)``, or ``v . h_k`` when the
    relation projection is disabled.
    """
    heads, rels, tails = edges.unbind(1)
    if use_rel_proj:
        keys = relation_project(rel_emb[rels], indicator[tails], rel_proj)
    else:
        keys = rel_emb[rels]
    return segment_softmax(keys @ attn_vec, heads, n_entities)


def householder(unit: Tensor, h: Tensor) -> Tensor:
    """Apply ``I - 2 u u^T`` row-wise without forming the matrix."""
    return h - 2.0 * unit * (unit * h).sum(-1, keepdim=True)


def layer_forward(
    h_prev: Tensor,
    edges: Tensor,
    rel_emb: Tensor,
    indicator: Tensor,
    alpha: Tensor,
    use_indicator: bool = True,
) -> Tensor:
    """One aggregation layer.

    ``h_i' = tanh(g_i h_i + sum_{(i,k,j)} g_j alpha_ikj H_k h_j)`` with ``g = tanh(r)`` and
    ``H_k`` the Householder reflection of the unit-normalized relation embedding. The
    self-loop uses the identity transform with unit attention.
    """
    gate = torch.tanh(indicator) if use_indicator else torch.ones_like(indicator)
    aggregated = gate.unsqueeze(-1) * h_prev
    if edges.shape[0]:
        heads, rels, tails = edges.unbind(1)
        unit = F.normalize(rel_emb[rels], dim=-1)
        messages = (gate[tails] * alpha).unsqueeze(-1) * householder(unit, h_prev[tails])
        aggregated = aggregated + scatter(
            messages, heads, dim=0, dim_size=h_prev.shape[0], reduce="sum"
        )
    return torch.tanh(aggregated)


def intra_repr(layers: list[Tensor]) -> Tensor:
    return torch.cat(layers, dim=-1)


def proxy_attention(h: Tensor, proxies: Tensor) -> Tensor:
    """``sum_j softmax_j(cos(h, q_j)) (h - q_j)``; zero vectors have cosine 0 with everything."""
    if proxies.shape[0] == 0:
        raise ValidationError("proxy_attention needs at least one proxy vector")
    cos = F.normalize(h, dim=-1) @ F.normalize(proxies, dim=-1).T
    weights = torch.softmax(cos, dim=-1)
    return h - weights @ proxies


def gate_fuse(
    h: Tensor, h_proxy: Tensor, gate_weight: Tensor, gate_bias: Tensor, indicator: Tensor
) -> Tensor:
    """``[theta * h + (1 - theta) * h_proxy || r]`` with ``theta = sigmoid(W_g h_proxy + b)``."""
    if h.shape != h_proxy.shape:
        raise ValidationError(f"gate_fuse width mismatch: {tuple(h.shape)} vs {tuple(h_proxy.shape)}")
    theta = torch.sigmoid(h_proxy @ gate_weight.T + gate_bias)
    fused = theta * h + (1.0 - theta) * h_proxy
    return torch.cat([fused, indicator.unsqueeze(-1)], dim=-1)


def orth_penalty(rel_proj: Tensor) -> Tensor:
    """Elementwise squared deviation of ``W_r^T W_r`` from the identity."""
    if rel_proj.dim() != 2 or rel_proj.shape[0] != rel_proj.shape[1]:
        raise ValidationError("orth_penalty expects a square matrix")
    eye = torch.eye(rel_proj.shape[0], dtype=rel_proj.dtype, device=rel_proj.device)
    return ((rel_proj.T @ rel_proj - eye) ** 2).sum()


# --------------------------------------------------------------------------- the encoder


class KeesaEncoder(nn.Module):
    """Shared encoder for both graphs, with the dangling-detection head on top.

    Holds the entity table ``h^0``, relation table, indicators ``r_e``, relation projection
    ``W_r``, attention vector ``v``, proxies, gate and the classifier MLP. Householder
    matrices are derived per edge at forward time.
    """

    def __init__(self, n_entities: int, n_relations: int, config: EncoderConfig | None = None) -> None:
        super().__init__()
        cfg = config or EncoderConfig()
        if n_entities < 1 or n_relations < 0:
            raise ValidationError("encoder needs at least one entity")
        self.config = cfg
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.dim = cfg.dim
        self.depth = cfg.depth
        width = (cfg.depth + 1) * cfg.dim

        self.ent_emb = nn.Parameter(torch.empty(n_entities, cfg.dim))
        self.rel_emb = nn.Parameter(torch.empty(max(n_relations, 1), cfg.dim))
        self.indicator = nn.Parameter(torch.full((n_entities,), float(cfg.indicator_init)))
        self.rel_proj = nn.Parameter(torch.empty(cfg.dim, cfg.dim))
        self.attn_vec = nn.Parameter(torch.empty(cfg.dim))
        self.proxies = nn.Parameter(torch.empty(cfg.n_proxy, width))
        self.gate = nn.Linear(width, width)
        self.clf_head = nn.Sequential(
            nn.Linear(width + 1, cfg.clf_hidden),
            nn.ReLU(),
            nn.Linear(cfg.clf_hidden, 2),
        )
        self.reset_parameters()

    @property
    def width(self) -> int:
        """Width of ``h^f`` including the appended indicator."""
        return (self.depth + 1) * self.dim + 1

    def reset_parameters(self) -> None:
        nn.init.xavier_uniform_(self.ent_emb)
        nn.init.xavier_uniform_(self.rel_emb)
        nn.init.orthogonal_(self.rel_proj)
        bound = 1.0 / self.dim**0.5
        nn.init.uniform_(self.attn_vec, -bound, bound)
        nn.init.xavier_uniform_(self.proxies)
        with torch.no_grad():
            self.indicator.fill_(float(self.config.indicator_init))

    def attention(self, graph: GraphIndex) -> Tensor:
        return attention_coeffs(
            graph.edges,
            self.rel_emb,
            self.indicator,
            self.rel_proj,
            self.attn_vec,
            graph.n_entities,
            use_rel_proj=self.config.use_rel_proj,
        )

    def forward(self, graph: GraphIndex, keep_layers: bool = False) -> EmbeddingTable:
        if graph.n_entities != self.n_entities:
            raise ValidationError(
                f"graph has {graph.n_entities} entities, encoder was built for {self.n_entities}"
            )
        cfg = self.config
        alpha = self.attention(graph)
        if cfg.dropout_on is DropoutTarget.ATTENTION:
            alpha = F.dropout(alpha, cfg.dropout, self.training)

        h = self.ent_emb
        layers = [h]
        for _ in range(self.depth):
            inputs = h
            if cfg.dropout_on is DropoutTarget.INPUTS:
                inputs = F.dropout(h, cfg.dropout, self.training)
            h = layer_forward(
                inputs, graph.edges, self.rel_emb, self.indicator, alpha, cfg.use_indicator
            )
            layers.append(h)

        intra = intra_repr(layers)
        proxy = proxy_attention(intra, self.proxies)
        final = gate_fuse(intra, proxy, self.gate.weight, self.gate.bias, self.indicator)
        return EmbeddingTable(final=final, layers=layers if keep_layers else None)

    def classify(self, h_f: Tensor) -> Tensor:
        """Detection logits; column 0 is the matchable class, column 1 the dangling class."""
        return self.clf_head(h_f)


def build_encoder(pair: KGPair, config: EncoderConfig | None = None, seed: int = 0) -> KeesaEncoder:
    """Encoder sized for the pair's union vocabulary, initialized from ``seed``."""
    generator_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        model = KeesaEncoder(pair.n_entities, pair.n_relations, config)
    finally:
        torch.random.set_rng_state(generator_state)
    logger.debug(
        "Built encoder: %d entities, %d relations, width %d",
        model.n_entities,
        model.n_relations,
        model.width,
    )
    return model


def encode(pair: KGPair | GraphIndex, model: KeesaEncoder, keep_layers: bool = False) -> EmbeddingTable:
    """Embed every entity of both graphs with ``model`` in evaluation mode."""
    graph = pair if isinstance(pair, GraphIndex) else build_graph(pair)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            return model(graph, keep_layers=keep_layers)
    finally:
        model.train(was_training)
