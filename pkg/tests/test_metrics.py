import math

import numpy as np
import pytest

from compfeat.metrics import (
    aggregate_cf_scores,
    format_cf_table,
    macro_f1,
    score_cf,
    score_labels,
)
from compfeat.propagation import ConfidenceBlock, EstimationResult, run_comp

from test_propagation import observed_dataset


def one_hot_result(truth, u):
    n = truth.shape[0]
    vals = np.zeros((n, u))
    vals[np.arange(n), truth[:, 0] - 1] = 1.0
    block = ConfidenceBlock(0, "s0", vals)
    return EstimationResult(confidences=(block,), hard_estimates=truth,
                            method="proposed", hyperparams={})


class TestScoreCf:
    @pytest.mark.parametrize("u,expected", [(3, math.log(2)), (12, math.log(11))])
    def test_uniform_complement_entropy_identity(self, u, expected):
        """CE and SE both equal ln(u-1) for uniform-over-complement rows."""
        ds = observed_dataset([u], 64, seed=0)
        scores = score_cf(run_comp(ds, 0), ds.cf_truth)
        assert scores[0].ce == pytest.approx(expected, abs=1e-12)
        assert scores[0].se == pytest.approx(expected, abs=1e-12)

    def test_reported_decimals(self):
        assert round(math.log(11), 4) == 2.3979
        assert round(math.log(2), 4) == 0.6931

    def test_perfect_one_hot(self):
        ds = observed_dataset([4], 30, seed=1)
        res = one_hot_result(ds.cf_truth, 4)
        s = score_cf(res, ds.cf_truth)[0]
        assert s.acc == 1.0
        assert s.ce == 0.0 and s.ce_clipped == 0
        assert s.se == 0.0
        assert s.macro_f1 == pytest.approx(
            sum(1.0 for c in range(1, 5) if (ds.cf_truth[:, 0] == c).any()) / 4
        )

    def test_clip_counted(self):
        truth = np.array([[1], [2]])
        vals = np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
        res = EstimationResult(
            confidences=(ConfidenceBlock(0, "s0", vals),),
            hard_estimates=np.array([[2], [2]]),
            method="proposed", hyperparams={},
        )
        s = score_cf(res, truth)[0]
        assert s.ce_clipped == 1
        assert s.ce == pytest.approx(0.5 * -math.log(1e-12))

    def test_permutation_invariance(self):
        ds = observed_dataset([5], 40, seed=2)
        res = run_comp(ds, 3)
        base = score_cf(res, ds.cf_truth)[0]
        perm = np.random.default_rng(0).permutation(40)
        permuted = EstimationResult(
            confidences=(ConfidenceBlock(0, res.confidences[0].name,
                                         res.confidences[0].values[perm]),),
            hard_estimates=res.hard_estimates[perm],
            method="comp", hyperparams={},
        )
        shuffled = score_cf(permuted, ds.cf_truth[perm])[0]
        assert shuffled.acc == base.acc
        assert shuffled.ce == pytest.approx(base.ce, abs=1e-12)
        assert shuffled.se == pytest.approx(base.se, abs=1e-12)

    def test_entropy_falls_toward_one_hot(self):
        """SE is non-increasing along the segment from uniform-over-complement
        to a one-hot row."""
        start = np.array([0.5, 0.0, 0.5])
        end = np.array([1.0, 0.0, 0.0])
        prev = math.inf
        for lam in np.linspace(0.0, 1.0, 11):
            row = (1 - lam) * start + lam * end
            se = -(row[row > 0] * np.log(row[row > 0])).sum()
            assert se <= prev + 1e-12
            prev = se


class TestMacroF1:
    def test_perfect(self):
        y = np.array([1, 2, 1, 2])
        assert macro_f1(y, y, 2) == 1.0

    def test_all_one_class_on_balanced_truth(self):
        truth = np.array([1, 1, 2, 2])
        pred = np.array([2, 2, 2, 2])
        # F1 of predicted class: precision 1/2, recall 1 -> 2/3; other 0
        assert macro_f1(pred, truth, 2) == pytest.approx(1.0 / 3.0)

    def test_absent_class_scores_zero(self):
        truth = np.array([1, 1])
        pred = np.array([1, 1])
        assert macro_f1(pred, truth, 3) == pytest.approx(1.0 / 3.0)


class TestScoreLabels:
    def test_perfect_probabilities(self):
        truth = np.array([1, 2, 1, 2])
        assert score_labels(np.array([0.1, 0.9, 0.2, 0.8]), truth) == 1.0

    def test_hard_codes_accepted(self):
        truth = np.array([1, 2, 2])
        assert score_labels(np.array([1, 2, 2]), truth) == 1.0

    def test_coin_flips_near_half(self):
        rng = np.random.default_rng(4)
        n = 100_000
        truth = np.tile([1, 2], n // 2)
        pred = rng.uniform(size=n)
        assert score_labels(pred, truth) == pytest.approx(0.5, abs=0.02)


class TestReports:
    def test_aggregate_and_format(self):
        ds = observed_dataset([3, 4], 25, seed=5)
        per_seed = [score_cf(run_comp(ds, s), ds.cf_truth) for s in range(3)]
        rows = aggregate_cf_scores(per_seed)
        assert rows[0]["name"] == "s0"
        assert rows[0]["ce"]["std"] == pytest.approx(0.0, abs=1e-12)
        table = format_cf_table({"comp": rows})
        assert "s0" in table and "±" in table
        assert f"{math.log(2):.4f}" in table
