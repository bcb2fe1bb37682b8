from __future__ import annotations

import math

import numpy as np
import pytest

from lambdaea.exceptions import ValidationError
from lambdaea.oracles import (
    GaussianPUWorld,
    fd_gradient,
    mc_unbiasedness,
    true_risk,
    true_risk_logistic,
    variance_compare,
)

PHI_MINUS_ONE = 0.15865525393145707


class TestTrueRisk:
    @pytest.mark.parametrize("pi_p", [0.1, 0.6, 0.9])
    def test_symmetric_world_at_zero(self, pi_p):
        world = GaussianPUWorld(pi_p=pi_p, pi_p_u=0.0)
        assert true_risk(world, 0.0) == pytest.approx(PHI_MINUS_ONE, abs=1e-12)

    def test_far_left_threshold_misses_every_negative(self):
        world = GaussianPUWorld(pi_p=0.6, pi_p_u=0.3)
        assert true_risk(world, -50.0) == pytest.approx(0.4, abs=1e-12)

    def test_far_right_threshold_misses_every_positive(self):
        world = GaussianPUWorld(pi_p=0.6, pi_p_u=0.3)
        assert true_risk(world, 50.0) == pytest.approx(0.6, abs=1e-12)

    def test_identical_classes_give_one_half(self):
        world = GaussianPUWorld(mean_p=0.0, mean_n=0.0, pi_p=0.6, pi_p_u=0.3)
        assert true_risk(world, 0.0) == pytest.approx(0.5, abs=1e-12)

    def test_logistic_risk_exceeds_zero_one_risk(self):
        world = GaussianPUWorld(pi_p=0.6, pi_p_u=0.3)
        logistic = true_risk_logistic(world, 0.0)
        assert logistic == pytest.approx(true_risk(world, 0.0, loss="logistic"))
        # log(1 + e^-m) >= log(2) * [m <= 0]
        assert logistic > math.log(2) * true_risk(world, 0.0)

    def test_unknown_loss(self):
        with pytest.raises(ValidationError):
            true_risk(GaussianPUWorld(), 0.0, loss="hinge")  # type: ignore[arg-type]


class TestWorld:
    def test_labeled_ratio_sets_unlabeled_prior(self):
        world = GaussianPUWorld.from_labeled_ratio(0.6, 0.3)
        assert world.pi_p_u == pytest.approx(0.3 / 0.7)
        assert world.pi_p_tr == pytest.approx(0.3)

    def test_unlabeled_prior_cannot_exceed_total(self):
        with pytest.raises(ValidationError):
            GaussianPUWorld(pi_p=0.3, pi_p_u=0.5)

    def test_sd_must_be_positive(self):
        with pytest.raises(ValidationError):
            GaussianPUWorld(sd=0.0)


class TestMonteCarlo:
    def test_pure_negative_unlabeled(self):
        world = GaussianPUWorld(pi_p=0.6, pi_p_u=0.0, seed=1)
        result = mc_unbiasedness(world, 200, 200, 400)
        assert result.true_risk == pytest.approx(PHI_MINUS_ONE)
        assert result.within(3.0)

    def test_identical_classes(self):
        world = GaussianPUWorld(mean_p=0.0, mean_n=0.0, pi_p=0.6, pi_p_u=0.3, seed=2)
        result = mc_unbiasedness(world, 200, 200, 400)
        assert result.true_risk == pytest.approx(0.5)
        assert result.mean_estimate == pytest.approx(0.5, abs=0.02)

    def test_standard_error_shrinks_with_root_resamples(self):
        world = GaussianPUWorld.from_labeled_ratio(0.6, 0.3, seed=3)
        few = mc_unbiasedness(world, 100, 100, 400)
        many = mc_unbiasedness(world, 100, 100, 1600)
        assert few.std_error / many.std_error == pytest.approx(2.0, rel=0.15)

    def test_too_few_resamples(self):
        with pytest.raises(ValidationError, match="100"):
            mc_unbiasedness(GaussianPUWorld(), resamples=99)


class TestVarianceCompare:
    def test_single_resample_is_rejected(self):
        with pytest.raises(ValidationError):
            variance_compare(GaussianPUWorld.from_labeled_ratio(0.6, 0.3), resamples=1)

    def test_no_labeled_fraction_makes_estimators_equal(self):
        world = GaussianPUWorld(pi_p=0.6, pi_p_u=0.6, seed=4)
        comparison = variance_compare(world, 200, 200, 200)
        assert comparison.var_ours == comparison.var_nn
        assert comparison.var_ours_clamped == comparison.var_nn_clamped

    def test_prior_aware_estimator_has_lower_variance(self):
        world = GaussianPUWorld.from_labeled_ratio(0.6, 0.3, seed=5)
        comparison = variance_compare(world, 500, 500, 400)
        assert comparison.var_ours < comparison.var_nn

    def test_clamp_hides_most_of_the_nn_variance(self):
        world = GaussianPUWorld.from_labeled_ratio(0.6, 0.3, seed=6)
        comparison = variance_compare(world, 500, 500, 400)
        assert comparison.var_nn_clamped < comparison.var_nn


class TestFiniteDifferences:
    def test_quadratic(self):
        grad = fd_gradient(lambda x: float((x**2).sum()), np.array([1.0]), eps=1e-4)
        assert abs(float(grad[0]) - 2.0) < 1e-7

    def test_constant(self):
        np.testing.assert_array_equal(fd_gradient(lambda x: 3.0, np.zeros(4)), np.zeros(4))

    def test_cubic_error_is_second_order(self):
        def cube(x: np.ndarray) -> float:
            return float((x**3).sum())

        coarse = abs(float(fd_gradient(cube, np.array([1.0]), eps=1e-2)[0]) - 3.0)
        fine = abs(float(fd_gradient(cube, np.array([1.0]), eps=5e-3)[0]) - 3.0)
        assert coarse == pytest.approx(1e-4, rel=1e-3)
        assert fine == pytest.approx(coarse / 4, rel=1e-2)

    def test_matrix_parameters_keep_their_shape(self):
        x = np.arange(6, dtype=np.float64).reshape(2, 3)
        grad = fd_gradient(lambda v: float((v**2).sum()), x)
        np.testing.assert_allclose(grad, 2 * x, atol=1e-6)

    def test_non_finite_loss(self):
        with pytest.raises(ValidationError, match="non-finite"):
            fd_gradient(lambda x: math.inf, np.array([0.0]))

    def test_eps_must_be_positive(self):
        with pytest.raises(ValidationError):
            fd_gradient(lambda x: 0.0, np.array([0.0]), eps=0.0)
