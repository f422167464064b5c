"""Metric checks; the AUC oracle is brute-force pair counting."""

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domaug.metrics import (
    MetricsReport,
    MetricsRow,
    accuracy,
    auc_binary,
    auc_macro_ovr,
    evaluate_scores,
    f1_macro,
)


def brute_force_auc(scores, positives):
    """P(score_pos > score_neg) + 0.5 P(tie), by enumerating all pairs."""
    pos = scores[positives]
    neg = scores[~positives]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_hand_case():
    scores = np.array([0.1, 0.4, 0.35, 0.8])
    positives = np.array([False, False, True, True])
    assert auc_binary(scores, positives) == pytest.approx(0.75, abs=1e-12)
    assert brute_force_auc(scores, positives) == 0.75


def test_auc_matches_brute_force_on_random_inputs():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = rng.integers(4, 30)
        scores = rng.integers(0, 6, size=n).astype(float)  # integer scores force ties
        positives = np.zeros(n, dtype=bool)
        positives[rng.choice(n, size=rng.integers(1, n), replace=False)] = True
        if positives.all() or not positives.any():
            continue
        got = auc_binary(scores, positives)
        assert got == pytest.approx(brute_force_auc(scores, positives), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    scores=st.lists(st.integers(0, 5), min_size=2, max_size=12),
    data=st.data(),
)
def test_auc_equals_pair_counting(scores, data):
    n = len(scores)
    k = data.draw(st.integers(1, n - 1))
    positives = np.zeros(n, dtype=bool)
    positives[data.draw(st.permutations(range(n)))[:k]] = True
    scores = np.asarray(scores, dtype=float)
    assert auc_binary(scores, positives) == pytest.approx(
        brute_force_auc(scores, positives), abs=1e-12
    )


def test_auc_extremes_and_ties():
    assert auc_binary(np.array([0.0, 1.0]), np.array([False, True])) == 1.0
    assert auc_binary(np.array([1.0, 0.0]), np.array([False, True])) == 0.0
    assert auc_binary(np.array([0.5, 0.5, 0.5]), np.array([True, False, True])) == 0.5


def test_auc_requires_both_classes():
    with pytest.raises(ValueError, match="positive"):
        auc_binary(np.array([0.1, 0.2]), np.array([True, True]))


def test_random_scores_give_auc_near_half():
    rng = np.random.default_rng(1)
    scores = rng.standard_normal(10_000)
    positives = rng.random(10_000) < 0.5
    assert abs(auc_binary(scores, positives) - 0.5) < 0.03


def test_macro_auc_averages_per_class_columns():
    scores = np.array(
        [[0.8, 0.1, 0.1], [0.2, 0.6, 0.2], [0.1, 0.2, 0.7], [0.5, 0.3, 0.2]]
    )
    labels = np.array([0, 1, 2, 0])
    expected = np.mean(
        [auc_binary(scores[:, c], labels == c) for c in range(3)]
    )
    assert auc_macro_ovr(scores, labels) == pytest.approx(expected, abs=1e-12)


def test_macro_auc_skips_absent_classes_with_a_warning():
    scores = np.array([[0.8, 0.1, 0.1], [0.2, 0.6, 0.2], [0.3, 0.4, 0.3]])
    labels = np.array([0, 1, 0])  # class 2 never appears
    with pytest.warns(UserWarning, match="class 2 absent"):
        got = auc_macro_ovr(scores, labels)
    expected = np.mean([auc_binary(scores[:, c], labels == c) for c in range(2)])
    assert got == pytest.approx(expected, abs=1e-12)


def test_macro_auc_needs_two_present_classes():
    with pytest.raises(ValueError, match="two classes"):
        auc_macro_ovr(np.zeros((3, 2)), np.array([1, 1, 1]))


def test_constant_predictor_on_balanced_binary_labels():
    # predicting class 0 always: accuracy 1/2; per-class F1 = (2/3, 0), macro 1/3
    predictions = np.zeros(10, dtype=int)
    labels = np.array([0, 1] * 5)
    assert accuracy(predictions, labels) == 0.5
    assert f1_macro(predictions, labels) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_perfect_predictions():
    labels = np.array([0, 1, 2, 1])
    assert accuracy(labels, labels) == 1.0
    assert f1_macro(labels, labels) == 1.0


def test_f1_macro_hand_case():
    predictions = np.array([0, 0, 1, 1, 2])
    labels = np.array([0, 1, 1, 1, 1])
    # class 0: tp=1 fp=1 fn=0 -> 2/3; class 1: tp=2 fp=0 fn=2 -> 2/3 (class 2
    # absent from labels, excluded)
    assert f1_macro(predictions, labels) == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_accuracy_rejects_empty_input():
    with pytest.raises(ValueError, match="empty"):
        accuracy(np.array([]), np.array([]))


def test_report_average_is_the_arithmetic_mean():
    report = MetricsReport(
        rows={
            0: MetricsRow(auc=0.9, acc=0.8, f1=0.7),
            1: MetricsRow(auc=0.5, acc=0.4, f1=0.3),
        }
    )
    avg = report.average
    assert avg.auc == pytest.approx(0.7, abs=1e-12)
    assert avg.acc == pytest.approx(0.6, abs=1e-12)
    assert avg.f1 == pytest.approx(0.5, abs=1e-12)
    d = report.as_dict()
    assert set(d) == {"domains", "average"}
    assert d["domains"]["0"]["auc"] == 0.9


def test_empty_report_has_no_average():
    with pytest.raises(ValueError, match="empty"):
        _ = MetricsReport().average


def test_evaluate_scores_uses_argmax_predictions():
    scores = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]])
    labels = np.array([0, 1, 2])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        row = evaluate_scores(scores, labels)
    assert row.acc == 1.0
    assert row.f1 == 1.0
    assert row.auc == 1.0
