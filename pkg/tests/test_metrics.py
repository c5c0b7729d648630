"""Numeric and alignment metrics against brute-force oracles.

The oracles here are written in plain Python with no numpy/scipy so the
package implementation and the expected values come from different routes.
"""

import math
import random
from fractions import Fraction

import pytest

from reviewlab.metrics import (
    AlignmentReport,
    NumericMetricReport,
    SCORE_SPAN,
    accuracy,
    alignment_metrics,
    f1_accept,
    mae,
    mse,
    normalized_mae,
    numeric_metrics,
    pairwise_error,
    pearson,
    spearman,
)
from reviewlab.model import Decision


# ---------------------------------------------------------------------------
# Brute-force oracles (pure Python, no numpy)
# ---------------------------------------------------------------------------


def brute_mse(pred, true):
    return sum((Fraction(p) - Fraction(t)) ** 2 for p, t in zip(pred, true)) / len(pred)


def brute_mae(pred, true):
    return sum(abs(Fraction(p) - Fraction(t)) for p, t in zip(pred, true)) / len(pred)


def brute_pearson(x, y):
    n = len(x)
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    var_x = sum((a - mean_x) ** 2 for a in x)
    var_y = sum((b - mean_y) ** 2 for b in y)
    if var_x == 0 or var_y == 0:
        return None
    return cov / math.sqrt(var_x * var_y)

def brute_average_ranks(values):
    ranks = []
    for v in values:
        less = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        ranks.append(less + (equal + 1) / 2)
    return ranks


def brute_spearman(x, y):
    return brute_pearson(brute_average_ranks(x), brute_average_ranks(y))


def brute_pairwise_error(x, y):
    n = len(x)
    disagree = 0
    pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            pairs += 1
            if x[i] < x[j] and y[i] < y[j]:
                continue
            if x[i] > x[j] and y[i] > y[j]:
                continue
            if x[i] == x[j] and y[i] == y[j]:
                continue
            disagree += 1
    return disagree / pairs if pairs else None


def brute_f1(pred, true):
    tp = sum(1 for p, t in zip(pred, true) if p is Decision.ACCEPT and t is Decision.ACCEPT)
    fp = sum(1 for p, t in zip(pred, true) if p is Decision.ACCEPT and t is Decision.REJECT)
    fn = sum(1 for p, t in zip(pred, true) if p is Decision.REJECT and t is Decision.ACCEPT)
    denominator = 2 * tp + fp + fn
    return Fraction(2 * tp, denominator) if denominator else Fraction(0)


# ---------------------------------------------------------------------------
# Exact numeric metrics
# ---------------------------------------------------------------------------


class TestExactMetrics:
    def test_mse_mae_hand_case(self):
        pred = [Fraction(6), Fraction(5), Fraction(8)]
        true = [Fraction(7), Fraction(5), Fraction(6)]
        assert mse(pred, true) == Fraction(5, 3)
        assert mae(pred, true) == Fraction(1)

    def test_mse_mae_are_exact_fractions(self):
        pred = [Fraction(1, 3)] * 3
        true = [Fraction(0)] * 3
        assert mse(pred, true) == Fraction(1, 9)
        assert mae(pred, true) == Fraction(1, 3)

    def test_against_oracle_random(self):
        rng = random.Random(7)
        for _ in range(200):
            n = rng.randint(1, 30)
            pred = [Fraction(rng.randint(10, 100), rng.randint(1, 10)) for _ in range(n)]
            true = [Fraction(rng.randint(10, 100), rng.randint(1, 10)) for _ in range(n)]
            assert mse(pred, true) == brute_mse(pred, true)
            assert mae(pred, true) == brute_mae(pred, true)

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            mse([Fraction(1)], [Fraction(1), Fraction(2)])
        with pytest.raises(ValueError):
            mae([], [])

    def test_accuracy(self):
        pred = [Decision.ACCEPT, Decision.REJECT, Decision.ACCEPT]
        true = [Decision.ACCEPT, Decision.ACCEPT, Decision.ACCEPT]
        assert accuracy(pred, true) == Fraction(2, 3)

    def test_f1_hand_case(self):
        # tp=1 fp=1 fn=1 -> 2/4
        pred = [Decision.ACCEPT, Decision.ACCEPT, Decision.REJECT]
        true = [Decision.ACCEPT, Decision.REJECT, Decision.ACCEPT]
        assert f1_accept(pred, true) == Fraction(1, 2)

    def test_f1_zero_denominator(self):
        pred = [Decision.REJECT, Decision.REJECT]
        true = [Decision.REJECT, Decision.REJECT]
        assert f1_accept(pred, true) == Fraction(0)

    def test_f1_against_oracle_random(self):
        rng = random.Random(11)
        options = (Decision.ACCEPT, Decision.REJECT)
        for _ in range(300):
            n = rng.randint(1, 25)
            pred = [rng.choice(options) for _ in range(n)]
            true = [rng.choice(options) for _ in range(n)]
            assert f1_accept(pred, true) == brute_f1(pred, true)

    def test_numeric_metrics_report(self):
        pred_r = [Fraction(6), Fraction(4)]
        true_r = [Fraction(7), Fraction(4)]
        pred_d = [Decision.ACCEPT, Decision.REJECT]
        true_d = [Decision.ACCEPT, Decision.ACCEPT]
        report = numeric_metrics(pred_r, true_r, pred_d, true_d)
        assert isinstance(report, NumericMetricReport)
        assert report.mse == Fraction(1, 2)
        assert report.mae == Fraction(1, 2)
        assert report.acc == Fraction(1, 2)
        assert report.f1 == Fraction(2, 3)
        assert report.count == 2
        as_json = report.to_dict()
        assert as_json["mse"] == "0.5"
        floats = report.to_float_dict()
        assert floats["f1"] == pytest.approx(2 / 3)


# ---------------------------------------------------------------------------
# Alignment metrics
# ---------------------------------------------------------------------------


class TestAlignment:
    def test_normalized_mae_uses_full_span(self):
        assert SCORE_SPAN == 16.0
        # |10 - 2| / 16 = 0.5
        assert normalized_mae([10.0], [2.0]) == pytest.approx(0.5)

    def test_pearson_hand_case(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0)

    def test_pearson_degenerate(self):
        assert pearson([1, 1, 1], [2, 3, 4]) is None
        assert pearson([1], [2]) is None

    def test_spearman_is_rank_pearson(self):
        # monotone but nonlinear: rank correlation is exactly 1
        x = [1, 2, 3, 4, 5]
        y = [1, 8, 27, 64, 125]
        assert spearman(x, y) == pytest.approx(1.0)

    def test_spearman_with_ties_uses_average_ranks(self):
        x = [1, 2, 2, 3]
        y = [1, 2, 3, 4]
        assert spearman(x, y) == pytest.approx(brute_spearman(x, y), abs=1e-12)

    def test_pairwise_error_tie_rules(self):
        # tie in both vectors agrees; tie in exactly one disagrees
        assert pairwise_error([1, 1], [2, 2]) == 0.0
        assert pairwise_error([1, 1], [2, 3]) == 1.0
        assert pairwise_error([1, 2], [2, 2]) == 1.0

    def test_pairwise_error_none_for_single_point(self):
        assert pairwise_error([1], [1]) is None

    def test_random_against_oracles(self):
        rng = random.Random(13)
        for _ in range(200):
            n = rng.randint(2, 40)
            x = [rng.randint(1, 10) for _ in range(n)]
            y = [rng.randint(1, 10) for _ in range(n)]
            expected = brute_pearson(x, y)
            actual = pearson(x, y)
            if expected is None:
                assert actual is None
            else:
                assert actual == pytest.approx(expected, abs=1e-9)
            expected = brute_spearman(x, y)
            actual = spearman(x, y)
            if expected is None:
                assert actual is None
            else:
                assert actual == pytest.approx(expected, abs=1e-9)
            assert pairwise_error(x, y) == pytest.approx(
                brute_pairwise_error(x, y), abs=1e-12
            )

    def test_invariance_properties(self):
        rng = random.Random(17)
        for _ in range(100):
            n = rng.randint(3, 20)
            x = [rng.uniform(1, 10) for _ in range(n)]
            y = [rng.uniform(1, 10) for _ in range(n)]
            scaled_x = [3.0 * v + 2.0 for v in x]
            # pearson/spearman invariant under positive affine maps
            assert pearson(scaled_x, y) == pytest.approx(pearson(x, y), abs=1e-9)
            assert spearman(scaled_x, y) == pytest.approx(spearman(x, y), abs=1e-9)
            # pairwise error invariant under any strictly monotone map
            cubed_x = [v**3 for v in x]
            assert pairwise_error(cubed_x, y) == pytest.approx(
                pairwise_error(x, y), abs=1e-12
            )

    def test_alignment_report_degenerate_inputs(self):
        report = alignment_metrics([5.0, 5.0, 5.0], [5.0, 6.0, 7.0])
        assert isinstance(report, AlignmentReport)
        assert report.pearson is None
        assert report.spearman is None
        assert report.mae_normalized is not None
        assert report.notes  # a note explains the Nones

    def test_alignment_report_regular(self):
        report = alignment_metrics([2.0, 6.0, 10.0], [3.0, 7.0, 11.0])
        assert report.mae_normalized == pytest.approx(1 / 16)
        assert report.pearson == pytest.approx(1.0)
        assert report.spearman == pytest.approx(1.0)
        assert report.pairwise_error == 0.0
        assert report.count == 3

    def test_alignment_empty_raises(self):
        with pytest.raises(ValueError):
            alignment_metrics([], [])
