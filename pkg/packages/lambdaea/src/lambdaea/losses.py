"""Training objectives: the alignment margin, spectral contrastive loss and PU risks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import overload

import numpy as np
import torch
import torch.nn.functional as F
from numpy.typing import NDArray
from scipy.special import logsumexp
from torch import Tensor

from lambdaea.exceptions import ValidationError
from lambdaea.priors import ClassPriors

type Scalar = Tensor | NDArray[np.float64] | float

# Squared-distance floor; keeps the gradient of ||a - b|| finite at a == b.
_DIST_FLOOR = 1e-24
PROB_CLIP = 1e-12


@overload
def _positive_part(value: Tensor) -> Tensor: ...
@overload
def _positive_part(value: NDArray[np.float64]) -> NDArray[np.float64]: ...
@overload
def _positive_part(value: float) -> float: ...
def _positive_part(value: Scalar) -> Scalar:
    if isinstance(value, Tensor):
        return value.clamp_min(0.0)
    if isinstance(value, np.ndarray):
        return np.maximum(value, 0.0)
    return max(0.0, float(value))


def similarity(a: Tensor, b: Tensor) -> Tensor:
    """Negative Euclidean distance along the last dimension."""
    return -torch.sqrt(((a - b) ** 2).sum(-1).clamp_min(_DIST_FLOOR))


def margin_h(sim_neg: Scalar, sim_pos: Scalar, gamma: float) -> Scalar:
    """Hinge ``[sim_neg - sim_pos + gamma]_+``."""
    return _positive_part(sim_neg - sim_pos + gamma)  # type: ignore[operator]


@dataclass(frozen=True)
class ContrastiveBatch:
    """Anchor pairs with their negatives.

    ``anchors`` is ``(B, 2)`` of (query, positive) union ids; ``negatives`` is ``(B, N)``
    padded with ``-1`` where a query has fewer than N negatives.
    """

    anchors: Tensor
    negatives: Tensor
    lam: float = 30.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValidationError("lambda must be positive")
        if self.gamma < 0:
            raise ValidationError("gamma must be non-negative")
        if self.anchors.dim() != 2 or self.anchors.shape[1] != 2:
            raise ValidationError("anchors must have shape (B, 2)")
        if self.negatives.dim() != 2 or self.negatives.shape[0] != self.anchors.shape[0]:
            raise ValidationError("negatives must have shape (B, N)")
        if bool((self.negatives == self.anchors[:, 1:2]).any()):
            raise ValidationError("a negative equals its anchor's positive")

    @property
    def size(self) -> int:
        return int(self.anchors.shape[0])


def spectral_contrastive_loss(
    batch: ContrastiveBatch,
    emb: Tensor,
    normalize: bool = True,
    rescale_h: bool = False,
) -> Tensor:
    """``sum_i log(1 + sum_j exp(lam * H_ij))`` with ``H_ij = [s(q_i, n_j) - s(q_i, p_i) + gamma]_+``.

    Args:
        batch: Anchors and negatives over row ids of ``emb``
        emb: Embedding table ``(n, D)``
        normalize: L2-normalize rows before measuring distances
        rescale_h: Divide H by its (detached) batch mean

    Returns:
        The summed loss as a 0-dim tensor
    """
    if batch.negatives.shape[1] == 0 or batch.size == 0:
        return emb.new_zeros(())
    table = F.normalize(emb, dim=-1) if normalize else emb
    queries = table[batch.anchors[:, 0]]
    positives = table[batch.anchors[:, 1]]
    mask = batch.negatives >= 0
    negatives = table[batch.negatives.clamp_min(0)]

    sim_pos = similarity(queries, positives)
    sim_neg = similarity(queries.unsqueeze(1), negatives)
    h = margin_h(sim_neg, sim_pos.unsqueeze(1), batch.gamma)
    if rescale_h and bool(mask.any()):
        h = h / h[mask].mean().detach().clamp_min(1e-12)

    logits = (batch.lam * h).masked_fill(~mask, float("-inf"))
    logits = torch.cat([logits.new_zeros(batch.size, 1), logits], dim=1)
    return torch.logsumexp(logits, dim=1).sum()


def infonce(q: Tensor, p_plus: Tensor, negs: Tensor, lam: float) -> Tensor:
    """``-log softmax`` of the positive among ``lam * sim`` scores.

    Evaluated as ``softplus(logsumexp(lam * (s_neg - s_pos)))`` so that the result keeps full
    relative precision when the positive dominates.
    """
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    if negs.shape[-2] == 0:
        return q.new_zeros(q.shape[:-1])
    diff = lam * (similarity(q.unsqueeze(-2), negs) - similarity(q, p_plus).unsqueeze(-1))
    return F.softplus(torch.logsumexp(diff, dim=-1), threshold=50.0)


def tuns_bound_check(h_values: NDArray[np.float64] | list[float], lam: float) -> tuple[float, float]:
    """Returns ``((1/lam) * logsumexp(lam * H), max(H))``."""
    values = np.asarray(h_values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("tuns_bound_check needs at least one value")
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    return float(logsumexp(lam * values) / lam), float(values.max())


@dataclass(frozen=True)
class RiskTerms:
    """Empirical negative log-likelihood risks.

    ``r_p_plus`` labels positives matchable, ``r_u_minus`` labels unlabeled dangling and
    ``r_p_minus`` labels positives dangling. Fields may be tensors (training), numpy arrays
    (vectorized Monte Carlo) or floats.
    """

    r_p_plus: Scalar
    r_u_minus: Scalar
    r_p_minus: Scalar


def _prob_floor(dtype: torch.dtype) -> float:
    # 1 - 1e-12 rounds to 1 in float32
    return max(PROB_CLIP, float(torch.finfo(dtype).eps))


def risk_terms(prob_pos: Tensor, labeled_pos: Tensor, unlabeled: Tensor) -> RiskTerms:
    """Mean cross-entropy risks from per-entity matchable probabilities.

    Args:
        prob_pos: ``y(+1)`` for every entity; ``y(-1) = 1 - y(+1)``
        labeled_pos: Ids of labeled positives
        unlabeled: Ids of unlabeled entities, disjoint from ``labeled_pos``
    """
    if labeled_pos.numel() == 0 or unlabeled.numel() == 0:
        raise ValidationError("risk_terms needs non-empty labeled and unlabeled sets")
    if np.intersect1d(labeled_pos.cpu().numpy(), unlabeled.cpu().numpy()).size:
        raise ValidationError("labeled and unlabeled sets overlap")
    floor = _prob_floor(prob_pos.dtype)
    p = prob_pos.clamp(floor, 1.0 - floor)
    pos = p[labeled_pos]
    unl = p[unlabeled]
    return RiskTerms(
        r_p_plus=-torch.log(pos).mean(),
        r_u_minus=-torch.log1p(-unl).mean(),
        r_p_minus=-torch.log1p(-pos).mean(),
    )


def pu_loss(terms: RiskTerms, priors: ClassPriors) -> Scalar:
    """``alpha * pi_p * R_p^+ + max(0, R_u^- - pi_p^u * R_p^-)``."""
    if priors.pi_n <= 0:
        raise ValidationError("pu_loss is undefined when pi_n = 0")
    negative_part = terms.r_u_minus - priors.pi_p_u * terms.r_p_minus  # type: ignore[operator]
    return priors.alpha * priors.pi_p * terms.r_p_plus + _positive_part(negative_part)  # type: ignore[operator]


def unbiased_risk(terms: RiskTerms, priors: ClassPriors) -> Scalar:
    """``pi_p R_p^+ + (pi_n / pi_n^u) (R_u^- - pi_p^u R_p^-)``, unclamped."""
    if priors.pi_n_u <= 0:
        raise ValidationError("unbiased_risk is undefined when pi_n_u = 0")
    scale = priors.pi_n / priors.pi_n_u
    return priors.pi_p * terms.r_p_plus + scale * (  # type: ignore[operator]
        terms.r_u_minus - priors.pi_p_u * terms.r_p_minus  # type: ignore[operator]
    )


def combined_warmup_loss(
    l_info: Scalar, l_pu: Scalar, l_o: Scalar, beta: float, mu_o: float
) -> Scalar:
    if not 0.0 <= beta <= 1.0:
        raise ValidationError("beta must lie in [0, 1]")
    if mu_o < 0:
        raise ValidationError("mu_o must be non-negative")
    return beta * l_info + (1.0 - beta) * l_pu + mu_o * l_o  # type: ignore[operator]
