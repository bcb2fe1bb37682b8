from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from lambdaea.exceptions import ValidationError
from lambdaea.losses import (
    ContrastiveBatch,
    RiskTerms,
    combined_warmup_loss,
    infonce,
    margin_h,
    pu_loss,
    risk_terms,
    similarity,
    spectral_contrastive_loss,
    tuns_bound_check,
    unbiased_risk,
)
from lambdaea.oracles import decimal_infonce, fd_gradient
from lambdaea.priors import ClassPriors

TRANSDUCTIVE = ClassPriors.from_transductive(0.6, 0.3)


def _batch(anchors, negatives, **kwargs) -> ContrastiveBatch:
    return ContrastiveBatch(
        anchors=torch.as_tensor(anchors, dtype=torch.long),
        negatives=torch.as_tensor(np.asarray(negatives), dtype=torch.long),
        **kwargs,
    )


class TestMargin:
    @pytest.mark.parametrize(
        ("sim_neg", "sim_pos", "expected"),
        [(-1.0, -1.0, 1.0), (-3.0, -1.0, 0.0), (-1.1, -1.0, 0.9)],
    )
    def test_values(self, sim_neg, sim_pos, expected):
        assert math.isclose(margin_h(sim_neg, sim_pos, 1.0), expected, abs_tol=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(0)
        neg, pos, shift = rng.normal(size=(3, 20))
        np.testing.assert_allclose(margin_h(neg + shift, pos + shift, 0.5), margin_h(neg, pos, 0.5), atol=1e-12)

    def test_similarity_is_negative_distance(self):
        a = torch.tensor([0.0, 0.0], dtype=torch.float64)
        b = torch.tensor([3.0, 4.0], dtype=torch.float64)
        assert float(similarity(a, b)) == pytest.approx(-5.0)


class TestSpectralContrastive:
    def test_no_negatives_is_zero(self):
        batch = _batch([[0, 1]], np.empty((1, 0)))
        assert float(spectral_contrastive_loss(batch, torch.randn(3, 4))) == 0.0

    def test_identical_rows_without_margin(self):
        emb = torch.ones(4, 3, dtype=torch.float64)
        batch = _batch([[0, 1]], [[2, 3]], gamma=0.0)
        assert math.isclose(float(spectral_contrastive_loss(batch, emb)), math.log(3.0), rel_tol=1e-12)

    def test_padding_is_ignored(self):
        emb = torch.ones(4, 3, dtype=torch.float64)
        padded = _batch([[0, 1]], [[2, -1]], gamma=0.0)
        assert math.isclose(float(spectral_contrastive_loss(padded, emb)), math.log(2.0), rel_tol=1e-12)

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(3)
        emb = torch.as_tensor(rng.normal(size=(6, 4)))
        batch = _batch([[0, 3], [1, 4]], [[4, 5], [3, 5]], lam=2.0, gamma=0.5)
        table = emb / emb.norm(dim=1, keepdim=True)
        expected = 0.0
        for (q, p), negs in zip(batch.anchors.tolist(), batch.negatives.tolist(), strict=True):
            s_pos = -float((table[q] - table[p]).norm())
            total = 1.0
            for n in negs:
                s_neg = -float((table[q] - table[n]).norm())
                total += math.exp(2.0 * max(0.0, s_neg - s_pos + 0.5))
            expected += math.log(total)
        assert math.isclose(float(spectral_contrastive_loss(batch, emb)), expected, rel_tol=1e-10)

    def test_negative_equal_to_positive_is_rejected(self):
        with pytest.raises(ValidationError):
            _batch([[0, 1]], [[1, 2]])

    @pytest.mark.parametrize("kwargs", [{"lam": 0.0}, {"gamma": -1.0}])
    def test_parameter_bounds(self, kwargs):
        with pytest.raises(ValidationError):
            _batch([[0, 1]], [[2]], **kwargs)


class TestInfoNCE:
    def test_no_negatives(self):
        q = torch.zeros(3, dtype=torch.float64)
        out = infonce(q, torch.ones(3, dtype=torch.float64), torch.empty(0, 3, dtype=torch.float64), 30.0)
        assert float(out) == 0.0

    def test_equal_similarities_give_log_two(self):
        q = torch.zeros(2, dtype=torch.float64)
        p = torch.tensor([1.0, 0.0], dtype=torch.float64)
        negs = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
        assert math.isclose(float(infonce(q, p, negs, 30.0)), math.log(2.0), rel_tol=1e-12)

    @pytest.mark.parametrize("lam", [1.0, 30.0, 200.0])
    def test_agrees_with_high_precision_reference(self, lam):
        rng = np.random.default_rng(int(lam))
        q, p = torch.as_tensor(rng.normal(size=(2, 5)))
        p = q + 0.01 * p
        negs = torch.as_tensor(rng.normal(size=(7, 5)))
        sim_pos = float(similarity(q, p))
        sim_negs = [float(similarity(q, n)) for n in negs]
        expected = decimal_infonce(sim_pos, sim_negs, lam, digits=300)
        assert math.isclose(float(infonce(q, p, negs, lam)), expected, rel_tol=1e-10, abs_tol=1e-300)

    def test_lambda_must_be_positive(self):
        with pytest.raises(ValidationError):
            infonce(torch.zeros(2), torch.zeros(2), torch.zeros(1, 2), 0.0)


class TestBoundCheck:
    def test_smooth_max_brackets_true_max(self):
        values = [0.2, 0.5, 0.45]
        smooth, peak = tuns_bound_check(values, 30.0)
        assert peak == 0.5
        assert peak <= smooth <= peak + math.log(len(values)) / 30.0

    def test_large_lambda_converges_to_max(self):
        smooth, peak = tuns_bound_check([0.1, 0.7], 1e4)
        assert math.isclose(smooth, peak, abs_tol=1e-4)

    def test_empty_input(self):
        with pytest.raises(ValidationError):
            tuns_bound_check([], 30.0)


class TestRiskTerms:
    def test_half_probabilities(self):
        terms = risk_terms(torch.full((4,), 0.5, dtype=torch.float64), torch.tensor([0]), torch.tensor([1, 2, 3]))
        for value in (terms.r_p_plus, terms.r_u_minus, terms.r_p_minus):
            assert math.isclose(float(value), math.log(2.0), rel_tol=1e-12)

    def test_extreme_probabilities_stay_finite(self):
        prob = torch.tensor([1.0, 0.0, 1.0], dtype=torch.float32)
        terms = risk_terms(prob, torch.tensor([0, 1]), torch.tensor([2]))
        assert all(math.isfinite(float(v)) for v in (terms.r_p_plus, terms.r_u_minus, terms.r_p_minus))

    def test_empty_sets(self):
        with pytest.raises(ValidationError):
            risk_terms(torch.rand(3), torch.tensor([], dtype=torch.long), torch.tensor([1]))

    def test_overlapping_sets(self):
        with pytest.raises(ValidationError):
            risk_terms(torch.rand(3), torch.tensor([0, 1]), torch.tensor([1, 2]))


class TestPULoss:
    def test_transductive_example(self):
        terms = RiskTerms(r_p_plus=0.2, r_u_minus=0.5, r_p_minus=0.9)
        assert math.isclose(pu_loss(terms, TRANSDUCTIVE), 2.0 / 7.0, rel_tol=1e-12)

    def test_negative_part_is_clamped(self):
        terms = RiskTerms(r_p_plus=0.2, r_u_minus=0.1, r_p_minus=0.9)
        assert math.isclose(pu_loss(terms, TRANSDUCTIVE), 6.0 / 35.0, rel_tol=1e-12)

    def test_no_matchable_unlabeled(self):
        priors = ClassPriors.from_estimates(0.3, 0.0, 0.3)
        terms = RiskTerms(r_p_plus=0.4, r_u_minus=0.25, r_p_minus=0.9)
        expected = (1.0 / 0.7) * 0.3 * 0.4 + 0.25
        assert math.isclose(pu_loss(terms, priors), expected, rel_tol=1e-12)

    def test_undefined_without_dangling(self):
        priors = ClassPriors.from_estimates(1.0, 1.0, 0.3)
        with pytest.raises(ValidationError):
            pu_loss(RiskTerms(0.1, 0.1, 0.1), priors)

    def test_vectorized_over_numpy(self):
        terms = RiskTerms(
            r_p_plus=np.array([0.2, 0.2]),
            r_u_minus=np.array([0.5, 0.1]),
            r_p_minus=np.array([0.9, 0.9]),
        )
        np.testing.assert_allclose(pu_loss(terms, TRANSDUCTIVE), [2.0 / 7.0, 6.0 / 35.0])

    def test_gradient_matches_finite_differences(self):
        logits = np.array([0.8, 1.5, 1.0, 0.5, 2.0, -0.3])
        labeled = torch.tensor([0, 1])
        unlabeled = torch.tensor([2, 3, 4, 5])

        def loss(x) -> torch.Tensor:
            return pu_loss(risk_terms(torch.sigmoid(x), labeled, unlabeled), TRANSDUCTIVE)

        params = torch.tensor(logits, requires_grad=True)
        loss(params).backward()
        numeric = fd_gradient(lambda x: float(loss(torch.as_tensor(x))), logits, eps=1e-6)
        np.testing.assert_allclose(params.grad.numpy(), numeric, atol=1e-7)


class TestUnbiasedRisk:
    def test_reduces_to_plain_difference_without_labeled_share(self):
        priors = ClassPriors.from_estimates(0.6, 0.6, 0.0)
        terms = RiskTerms(r_p_plus=0.3, r_u_minus=0.2, r_p_minus=0.5)
        assert math.isclose(unbiased_risk(terms, priors), 0.6 * 0.3 + 0.2 - 0.6 * 0.5, rel_tol=1e-12)

    def test_can_go_negative(self):
        terms = RiskTerms(r_p_plus=0.0, r_u_minus=0.0, r_p_minus=1.0)
        assert unbiased_risk(terms, TRANSDUCTIVE) < 0.0

    def test_undefined_when_unlabeled_all_matchable(self):
        priors = ClassPriors.from_estimates(1.0, 1.0, 0.5)
        with pytest.raises(ValidationError):
            unbiased_risk(RiskTerms(0.1, 0.1, 0.1), priors)


class TestCombinedWarmup:
    def test_default_weights(self):
        assert math.isclose(combined_warmup_loss(1.0, 1.0, 1.0, 1e-3, 0.1), 1e-3 + 0.999 + 0.1)

    def test_pure_contrastive(self):
        assert combined_warmup_loss(2.0, 5.0, 0.0, 1.0, 0.0) == 2.0

    @pytest.mark.parametrize(("beta", "mu_o"), [(-0.1, 0.1), (1.1, 0.1), (0.5, -1.0)])
    def test_bounds(self, beta, mu_o):
        with pytest.raises(ValidationError):
            combined_warmup_loss(1.0, 1.0, 1.0, beta, mu_o)
