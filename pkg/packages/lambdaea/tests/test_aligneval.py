from __future__ import annotations

import math

import numpy as np
import pytest

from lambdaea.aligneval import (
    PRF,
    MetricReport,
    align,
    consolidated_alignment_prf,
    cosine_matrix,
    csls_matrix,
    detection_prf,
    evaluate_alignment,
    hits_at_k,
    mutual_nn_pairs,
)
from lambdaea.enums import Metric, Setting
from lambdaea.exceptions import ValidationError
from lambdaea.ipule import DetectionResult, IpuleHistory
from lambdaea.kgdata import KGPair, split_anchors
from lambdaea.oracles import naive_csls, naive_mutual_nn
from lambdaea.priors import ClassPriors


def _detection(probs) -> DetectionResult:
    return DetectionResult(
        prob_matchable=np.asarray(probs, dtype=np.float64),
        priors=ClassPriors.from_estimates(0.5, 0.5, 0.2),
        history=IpuleHistory(),
        alignable=True,
    )


def _perfect_table(pair: KGPair, dim: int = 64, seed: int = 0) -> np.ndarray:
    """Random rows, with every anchor's target row a copy of its source row."""
    table = np.random.default_rng(seed).normal(size=(pair.n_entities, dim))
    table[pair.anchors[:, 1] + pair.target_offset] = table[pair.anchors[:, 0]]
    return table


def _perfect_detection(pair: KGPair) -> DetectionResult:
    probs = np.zeros(pair.n_entities)
    probs[pair.to_global(pair.anchors).ravel()] = 1.0
    return _detection(probs)


class TestSimilarity:
    def test_csls_matches_direct_definition(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n_src, n_tgt = rng.integers(1, 51), rng.integers(1, 61)
            k = int(rng.integers(1, 16))
            src = rng.normal(size=(n_src, 6))
            tgt = rng.normal(size=(n_tgt, 6))
            np.testing.assert_allclose(csls_matrix(src, tgt, k), naive_csls(src, tgt, k), atol=1e-12)

    def test_mutual_nn_matches_direct_definition(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            src = rng.normal(size=(rng.integers(1, 51), 6))
            tgt = rng.normal(size=(rng.integers(1, 61), 6))
            sim = csls_matrix(src, tgt, 10)
            assert [(i, j) for i, j, _ in mutual_nn_pairs(sim)] == naive_mutual_nn(sim)

    def test_single_pair_csls_is_zero(self):
        assert csls_matrix(np.array([[1.0, 2.0]]), np.array([[3.0, -1.0]]), k=10)[0, 0] == pytest.approx(0.0)

    def test_csls_is_scale_invariant(self):
        rng = np.random.default_rng(2)
        src, tgt = rng.normal(size=(2, 8, 5))
        np.testing.assert_allclose(csls_matrix(3.0 * src, 0.5 * tgt, 3), csls_matrix(src, tgt, 3), atol=1e-12)

    def test_csls_bounds(self):
        with pytest.raises(ValidationError):
            csls_matrix(np.ones((2, 2)), np.ones((2, 2)), k=0)
        with pytest.raises(ValidationError):
            csls_matrix(np.empty((0, 2)), np.ones((2, 2)))

    def test_zero_vectors_have_zero_cosine(self):
        assert cosine_matrix(np.zeros((1, 3)), np.ones((2, 3))).tolist() == [[0.0, 0.0]]

    def test_mutual_nn_is_not_symmetric_argmax(self):
        assert mutual_nn_pairs(np.array([[0.9, 0.8], [0.95, 0.1]])) == [(1, 0, 0.95)]

    def test_mutual_nn_ties_go_to_lowest_index(self):
        assert mutual_nn_pairs(np.ones((2, 2))) == [(0, 0, 1.0)]

    def test_mutual_nn_edge_cases(self):
        assert mutual_nn_pairs(np.empty((0, 3))) == []
        with pytest.raises(ValidationError):
            mutual_nn_pairs(np.array([[np.nan]]))


class TestAlign:
    def test_all_dangling_gives_empty_result(self, small_pair):
        result = align(_perfect_table(small_pair), small_pair, _detection(np.zeros(small_pair.n_entities)))
        assert result.empty
        assert len(result) == 0

    @pytest.mark.parametrize("metric", [Metric.COSINE, Metric.CSLS])
    def test_recovers_identical_rows(self, small_pair, metric):
        result = align(_perfect_table(small_pair), small_pair, metric=metric)
        found = {(s, t) for s, t, _ in result.pairs}
        assert {tuple(a) for a in small_pair.anchors.tolist()} <= found
        assert result.metric_name is metric

    def test_perfect_detection_aligns_exactly_the_anchors(self, small_pair):
        result = align(_perfect_table(small_pair), small_pair, _perfect_detection(small_pair))
        assert sorted(result.as_array().tolist()) == sorted(small_pair.anchors.tolist())

    def test_all_matchable_equals_no_detection(self, small_pair):
        table = _perfect_table(small_pair)
        everything = align(table, small_pair, _detection(np.ones(small_pair.n_entities)))
        plain = align(table, small_pair)
        assert everything.pairs == plain.pairs

    def test_excluded_anchors_leave_both_sides(self, small_pair):
        split = split_anchors(small_pair, 0.3, seed=0)
        result = align(_perfect_table(small_pair), small_pair, exclude=split.train)
        assert not set(split.train[:, 0].tolist()) & set(result.src_rankings)
        for ranking in result.src_rankings.values():
            assert not set(split.train[:, 1].tolist()) & set(ranking.tolist())

    def test_reverse_aligns_target_to_source(self, small_pair):
        result = align(_perfect_table(small_pair), small_pair, _perfect_detection(small_pair), reverse=True)
        assert sorted(result.as_array().tolist()) == sorted(small_pair.anchors[:, ::-1].tolist())

    def test_rank_depth(self, small_pair):
        result = align(_perfect_table(small_pair), small_pair, rank_depth=5)
        assert all(len(r) == 5 for r in result.src_rankings.values())

    def test_table_size_mismatch(self, small_pair):
        with pytest.raises(ValidationError):
            align(np.ones((3, 4)), small_pair)


class TestHits:
    RANKINGS = {
        0: [100, 101, 102],
        1: [201, 200, 7],
        2: list(range(300, 320)),
    }

    def test_mixed_ranks(self):
        # counterparts sit at ranks 1, 3 and 12
        truth = {0: 100, 1: 7, 2: 311}
        assert hits_at_k(self.RANKINGS, truth, 10) == pytest.approx(2 / 3)
        assert hits_at_k(self.RANKINGS, truth, 1) == pytest.approx(1 / 3)
        assert hits_at_k(self.RANKINGS, truth, 12) == 1.0

    def test_monotone_in_k(self):
        truth = np.array([[0, 102], [1, 200], [2, 315]])
        values = [hits_at_k(self.RANKINGS, truth, k) for k in range(1, 25)]
        assert values == sorted(values)

    def test_missing_ranking(self):
        with pytest.raises(ValidationError):
            hits_at_k(self.RANKINGS, {9: 1}, 1)

    def test_k_must_be_positive(self):
        with pytest.raises(ValidationError):
            hits_at_k(self.RANKINGS, {0: 100}, 0)

    def test_empty_truth(self):
        assert hits_at_k({}, {}, 1) == 0.0


class TestPRF:
    def test_everything_predicted_positive(self):
        truth = [True] * 7 + [False] * 5
        prf = detection_prf([True] * 12, truth)
        assert prf.precision == pytest.approx(7 / 12)
        assert prf.recall == 1.0
        assert prf.f1 == pytest.approx(14 / 19)
        assert abs(prf.precision - 0.583) <= 1e-3
        assert abs(prf.f1 - 0.736) <= 1e-3

    def test_perfect_labels(self):
        truth = np.array([True, False, True, False])
        assert detection_prf(truth, truth) == PRF(1.0, 1.0, 1.0)

    def test_nothing_predicted(self, log_stream):
        prf = detection_prf([False, False], [True, False])
        assert prf == PRF(0.0, 0.0, 0.0)
        assert "No positives predicted" in log_stream.getvalue()

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            detection_prf([True], [True, False])

    def test_matches_confusion_counts(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            labels = rng.random(40) < 0.5
            truth = rng.random(40) < 0.4
            tp = int((labels & truth).sum())
            fp = int((labels & ~truth).sum())
            fn = int((~labels & truth).sum())
            prf = detection_prf(labels, truth)
            assert prf.precision == pytest.approx(tp / (tp + fp) if tp + fp else 0.0)
            assert prf.recall == pytest.approx(tp / (tp + fn) if tp + fn else 0.0)
            assert prf.f1 == pytest.approx(2 * tp / (2 * tp + fp + fn) if tp else 0.0)

    def test_empty_universe(self):
        assert detection_prf([], []) == PRF(0.0, 0.0, 0.0)

    def test_consolidated_discount(self):
        prf = consolidated_alignment_prf(0.8, 0.9, 0.5)
        assert prf.precision == pytest.approx(0.4)
        assert prf.recall == pytest.approx(0.45)
        assert prf.f1 == pytest.approx(0.42353, abs=1e-5)

    def test_consolidated_bounds(self):
        with pytest.raises(ValidationError):
            consolidated_alignment_prf(1.2, 0.5, 0.5)


class TestEvaluateAlignment:
    def test_relaxed_only_without_detection(self, small_pair):
        split = split_anchors(small_pair, 0.3, seed=0)
        report = evaluate_alignment(_perfect_table(small_pair), small_pair, split, metric="cosine")
        assert report.alignment_relaxed == {"hits@1": 1.0, "hits@10": 1.0, "hits@50": 1.0}
        assert report.detection is None
        assert report.alignment_consolidated is None

    def test_perfect_case(self, small_pair):
        split = split_anchors(small_pair, 0.3, seed=0)
        report = evaluate_alignment(
            _perfect_table(small_pair), small_pair, split, _perfect_detection(small_pair), metric="cosine"
        )
        assert report.detection == PRF(1.0, 1.0, 1.0)
        assert report.h1_t11 == 1.0
        assert report.alignment_consolidated == PRF(1.0, 1.0, 1.0)
        assert report.consolidated_hits["hits@1"] == 1.0

    def test_dangling_predicted_matchable_lowers_precision(self, small_pair):
        split = split_anchors(small_pair, 0.3, seed=0)
        report = evaluate_alignment(
            _perfect_table(small_pair),
            small_pair,
            split,
            _detection(np.ones(small_pair.n_entities)),
            metric="cosine",
        )
        assert report.detection.recall == 0.0
        assert report.alignment_consolidated.precision < 1.0
        assert report.alignment_consolidated.recall == report.h1_t11

    def test_reverse_direction(self, small_pair):
        split = split_anchors(small_pair, 0.3, seed=0)
        report = evaluate_alignment(
            _perfect_table(small_pair), small_pair, split, _perfect_detection(small_pair), metric="cosine", reverse=True
        )
        assert report.alignment_relaxed["hits@1"] == 1.0
        assert report.detection == PRF(1.0, 1.0, 1.0)


class TestMetricReport:
    REPORT = MetricReport(
        detection=PRF.from_pr(0.5, 1.0),
        alignment_relaxed={"hits@1": 0.25},
        alignment_consolidated=PRF.from_pr(0.2, 0.4),
        consolidated_hits={"hits@1": 0.2},
        h1_t11=0.4,
    )

    def test_setting_filter(self):
        relaxed = self.REPORT.to_dict(Setting.RELAXED)
        assert "alignment_consolidated" not in relaxed
        assert relaxed["alignment_relaxed"] == {"hits@1": 0.25}
        consolidated = self.REPORT.to_dict(Setting.CONSOLIDATED)
        assert "alignment_relaxed" not in consolidated
        assert consolidated["h1_t11"] == 0.4

    def test_restores_from_dict(self):
        assert MetricReport.from_dict(self.REPORT.to_dict()) == self.REPORT

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            MetricReport(alignment_relaxed={"hits@1": 1.5})

    def test_f1_of_zero(self):
        assert math.isclose(PRF.from_pr(0.0, 0.0).f1, 0.0)
