"""Reference computations the library is checked against.

Closed-form and numerically integrated risks in a Gaussian PU world, Monte Carlo checks of
the unbiased risk estimator, central finite differences, and direct-definition versions of
CSLS and mutual nearest neighbors.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from decimal import Decimal, localcontext
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray
from scipy import integrate
from scipy.stats import norm

from lambdaea.exceptions import ValidationError
from lambdaea.logging import get_logger
from lambdaea.losses import RiskTerms, unbiased_risk
from lambdaea.priors import ClassPriors

type Matrix = NDArray[np.float64]
type LossName = Literal["zero_one", "logistic"]

logger = get_logger("oracles")

MIN_RESAMPLES = 100


@dataclass(frozen=True)
class GaussianPUWorld:
    """Positives ~ N(mean_p, sd), negatives ~ N(mean_n, sd).

    ``pi_p`` is the matchable share of the whole population and ``pi_p_u`` the matchable
    share of the unlabeled sample; the labeled ratio follows from the two.
    """

    mean_p: float = 1.0
    mean_n: float = -1.0
    sd: float = 1.0
    pi_p: float = 0.6
    pi_p_u: float = 0.6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sd <= 0:
            raise ValidationError("sd must be positive")
        if not 0.0 <= self.pi_p <= 1.0 or not 0.0 <= self.pi_p_u < 1.0:
            raise ValidationError("pi_p must lie in [0, 1] and pi_p_u in [0, 1)")
        if self.pi_p_u > self.pi_p + 1e-12:
            raise ValidationError("pi_p_u cannot exceed pi_p")

    @classmethod
    def from_labeled_ratio(cls, pi_p: float, pi_p_tr: float, **kwargs: Any) -> GaussianPUWorld:
        """World whose unlabeled prior is ``(pi_p - pi_p_tr) / (1 - pi_p_tr)``."""
        priors = ClassPriors.from_transductive(pi_p, pi_p_tr)
        return cls(pi_p=pi_p, pi_p_u=priors.pi_p_u, **kwargs)

    @property
    def pi_p_tr(self) -> float:
        return (self.pi_p - self.pi_p_u) / (1.0 - self.pi_p_u)

    @property
    def priors(self) -> ClassPriors:
        return ClassPriors.from_estimates(self.pi_p, self.pi_p_u, self.pi_p_tr)


@dataclass(frozen=True)
class OracleReport:
    name: str
    estimate: float
    se: float
    truth: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "se": self.se,
            "truth": self.truth,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean_estimate: float
    std_error: float
    true_risk: float

    def within(self, n_se: float = 3.0) -> bool:
        return abs(self.mean_estimate - self.true_risk) < n_se * self.std_error


@dataclass(frozen=True)
class VarianceComparison:
    """Raw estimator variances, plus the same estimators with the non-negative clamp."""

    var_ours: float
    var_nn: float
    var_ours_clamped: float
    var_nn_clamped: float


# --------------------------------------------------------------------------- true risks


def true_risk(world: GaussianPUWorld, threshold: float = 0.0, loss: LossName = "zero_one") -> float:
    """Risk of the rule ``sign(x - threshold)``.

    Example:
        >>> round(true_risk(GaussianPUWorld(), 0.0), 4)
        0.1587
    """
    if loss == "logistic":
        return true_risk_logistic(world, threshold)
    if loss != "zero_one":
        raise ValidationError(f"unknown loss {loss!r}")
    miss_pos = norm.cdf((threshold - world.mean_p) / world.sd)
    miss_neg = norm.sf((threshold - world.mean_n) / world.sd)
    return float(world.pi_p * miss_pos + (1.0 - world.pi_p) * miss_neg)


def _logistic(margin: NDArray[np.float64] | float) -> NDArray[np.float64]:
    return np.logaddexp(0.0, -np.asarray(margin, dtype=np.float64))


def true_risk_logistic(world: GaussianPUWorld, threshold: float = 0.0) -> float:
    """Logistic-loss risk of ``f(x) = x - threshold``, integrated numerically."""

    def expected(mean: float, sign: float) -> float:
        value, _ = integrate.quad(
            lambda x: float(_logistic(sign * (x - threshold))) * norm.pdf(x, mean, world.sd),
            -np.inf,
            np.inf,
        )
        return float(value)

    return world.pi_p * expected(world.mean_p, 1.0) + (1.0 - world.pi_p) * expected(world.mean_n, -1.0)


# --------------------------------------------------------------------------- Monte Carlo


def _sample_risk_terms(
    world: GaussianPUWorld,
    n_p: int,
    n_u: int,
    resamples: int,
    threshold: float,
    loss: LossName,
    rng: np.random.Generator,
) -> RiskTerms:
    """Empirical risks per resample, each field a ``(resamples,)`` array."""
    if n_p < 1 or n_u < 1:
        raise ValidationError("n_p and n_u must be >= 1")
    positives = rng.normal(world.mean_p, world.sd, size=(resamples, n_p))
    is_pos = rng.random((resamples, n_u)) < world.pi_p_u
    unlabeled = np.where(
        is_pos,
        rng.normal(world.mean_p, world.sd, size=(resamples, n_u)),
        rng.normal(world.mean_n, world.sd, size=(resamples, n_u)),
    )
    if loss == "zero_one":
        pos_loss = (positives <= threshold).astype(np.float64)
        pos_as_neg = (positives > threshold).astype(np.float64)
        unl_as_neg = (unlabeled > threshold).astype(np.float64)
    elif loss == "logistic":
        pos_loss = _logistic(positives - threshold)
        pos_as_neg = _logistic(threshold - positives)
        unl_as_neg = _logistic(threshold - unlabeled)
    else:
        raise ValidationError(f"unknown loss {loss!r}")
    return RiskTerms(
        r_p_plus=pos_loss.mean(axis=1),
        r_u_minus=unl_as_neg.mean(axis=1),
        r_p_minus=pos_as_neg.mean(axis=1),
    )


def mc_unbiasedness(
    world: GaussianPUWorld,
    n_p: int = 500,
    n_u: int = 500,
    resamples: int = 1000,
    threshold: float = 0.0,
    loss: LossName = "zero_one",
) -> MonteCarloEstimate:
    """Sample mean and standard error of the unbiased risk estimate over resampled PU sets.

    Raises:
        ValidationError: Fewer than 100 resamples
    """
    if resamples < MIN_RESAMPLES:
        raise ValidationError(f"mc_unbiasedness needs at least {MIN_RESAMPLES} resamples")
    rng = np.random.default_rng(world.seed)
    terms = _sample_risk_terms(world, n_p, n_u, resamples, threshold, loss, rng)
    estimates = np.asarray(unbiased_risk(terms, world.priors))
    result = MonteCarloEstimate(
        mean_estimate=float(estimates.mean()),
        std_error=float(estimates.std(ddof=1) / math.sqrt(resamples)),
        true_risk=true_risk(world, threshold, loss),
    )
    logger.debug(
        "Monte Carlo risk %.5f +- %.5f (truth %.5f)",
        result.mean_estimate,
        result.std_error,
        result.true_risk,
    )
    return result


def variance_compare(
    world: GaussianPUWorld,
    n_p: int = 500,
    n_u: int = 500,
    resamples: int = 1000,
    threshold: float = 0.0,
) -> VarianceComparison:
    """Variance of the unbiased prior-aware estimator against the ``p_u = p`` estimator.

    Both are evaluated raw on the same resamples:
    ``pi_p R_p^+ + (pi_n / pi_n^u)(R_u^- - pi_p^u R_p^-)`` against
    ``pi_p R_p^+ + (R_u^- - pi_p R_p^-)``. With no labeled fraction (``pi_p_u == pi_p``) the
    two are identical sample by sample. The ``*_clamped`` fields apply ``max(0, .)`` to the
    negative-class correction; the ``p_u = p`` correction is negative on average once part of
    the positives is labeled, so its clamped variance mostly reflects ``R_p^+`` alone.

    Raises:
        ValidationError: Fewer than 2 resamples
    """
    if resamples < 2:
        raise ValidationError("variance needs at least 2 resamples")
    rng = np.random.default_rng(world.seed)
    terms = _sample_risk_terms(world, n_p, n_u, resamples, threshold, "zero_one", rng)
    priors = world.priors
    r_p_plus = np.asarray(terms.r_p_plus)
    r_u_minus = np.asarray(terms.r_u_minus)
    r_p_minus = np.asarray(terms.r_p_minus)

    scale = priors.pi_n / priors.pi_n_u
    ours_correction = r_u_minus - priors.pi_p_u * r_p_minus
    nn_correction = r_u_minus - priors.pi_p * r_p_minus
    ours = np.asarray(unbiased_risk(terms, priors))
    nn = priors.pi_p * r_p_plus + nn_correction
    ours_clamped = priors.pi_p * r_p_plus + scale * np.maximum(ours_correction, 0.0)
    nn_clamped = priors.pi_p * r_p_plus + np.maximum(nn_correction, 0.0)
    return VarianceComparison(
        var_ours=float(ours.var(ddof=1)),
        var_nn=float(nn.var(ddof=1)),
        var_ours_clamped=float(ours_clamped.var(ddof=1)),
        var_nn_clamped=float(nn_clamped.var(ddof=1)),
    )


# --------------------------------------------------------------------------- gradients


def fd_gradient(
    loss_fn: Callable[[NDArray[np.float64]], float],
    params: NDArray[np.float64] | Sequence[float] | float,
    eps: float = 1e-4,
) -> NDArray[np.float64]:
    """Central finite differences ``(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)``.

    Example:
        >>> fd_gradient(lambda x: float((x**2).sum()), np.array([1.0]))
        array([2.])
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    x = np.array(params, dtype=np.float64)
    grad = np.empty_like(x)
    flat_x = x.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat_x.size):
        original = flat_x[i]
        flat_x[i] = original + eps
        upper = float(loss_fn(x))
        flat_x[i] = original - eps
        lower = float(loss_fn(x))
        flat_x[i] = original
        if not (math.isfinite(upper) and math.isfinite(lower)):
            raise ValidationError(f"non-finite loss while differencing coordinate {i}")
        flat_grad[i] = (upper - lower) / (2.0 * eps)
    return grad


# --------------------------------------------------------------------------- direct definitions


def naive_cosine(a: Sequence[float], b: Sequence[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b, strict=True))
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(y * y for y in b))
    return dot / (max(norm_a, 1e-12) * max(norm_b, 1e-12))


def naive_csls(src: Matrix, tgt: Matrix, k: int) -> Matrix:
    src_rows = np.asarray(src, dtype=np.float64).tolist()
    tgt_rows = np.asarray(tgt, dtype=np.float64).tolist()
    cos = [[naive_cosine(x, y) for y in tgt_rows] for x in src_rows]
    k_t = min(k, len(tgt_rows))
    k_s = min(k, len(src_rows))
    r_t = [sum(sorted(row, reverse=True)[:k_t]) / k_t for row in cos]
    columns = [[row[j] for row in cos] for j in range(len(tgt_rows))]
    r_s = [sum(sorted(col, reverse=True)[:k_s]) / k_s for col in columns]
    out = np.empty((len(src_rows), len(tgt_rows)))
    for i in range(len(src_rows)):
        for j in range(len(tgt_rows)):
            out[i, j] = 2.0 * cos[i][j] - r_t[i] - r_s[j]
    return out


def _first_argmax(values: Sequence[float]) -> int:
    best = 0
    for idx, value in enumerate(values):
        if value > values[best]:
            best = idx
    return best


def naive_mutual_nn(sim: Matrix) -> list[tuple[int, int]]:
    rows = np.asarray(sim, dtype=np.float64).tolist()
    if not rows or not rows[0]:
        return []
    pairs = []
    for i, row in enumerate(rows):
        j = _first_argmax(row)
        column = [rows[r][j] for r in range(len(rows))]
        if _first_argmax(column) == i:
            pairs.append((i, j))
    return pairs


def decimal_infonce(sim_pos: float, sim_negs: Sequence[float], lam: float, digits: int = 50) -> float:
    """``log(1 + sum_j exp(lam * (s_j - s_pos)))`` in high-precision decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = digits
        pos = Decimal(sim_pos)
        scale = Decimal(lam)
        total = Decimal(1)
        for s in sim_negs:
            total += (scale * (Decimal(s) - pos)).exp()
        return float(total.ln())
