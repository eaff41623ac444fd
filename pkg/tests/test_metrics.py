import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_probs, sample_labels
from oracle import brute_ece
from poscal.binning import ReliabilityTable, reliability_table
from poscal.core import BinningConfig, InvalidInputError
from poscal.metrics import (accuracy, confusion_matrix, ece, evaluate, f1, matthews,
                            per_class_f1, predicted_labels)


def onehot_preds(yhat, k):
    """Confident predictions with a small margin so argmax gives ``yhat``."""
    p = np.full((len(yhat), k), 0.1 / (k - 1))
    p[np.arange(len(yhat)), yhat] = 0.9
    return p


def test_ece_zero_when_empirical_matches_prediction():
    # 3 of 4 rows in each group carry the predicted-majority label
    preds = np.array([[0.75, 0.25]] * 4 + [[0.25, 0.75]] * 4)
    labels = np.array([0, 0, 0, 1, 1, 1, 1, 0])
    assert ece(reliability_table(preds, labels, BinningConfig(4))) == 0.0


def test_ece_single_populated_bin():
    cfg = BinningConfig(num_bins=2)
    table = ReliabilityTable(counts=np.array([[0], [10]]), mean_pred=np.array([[0.25], [0.8]]),
                             empirical=np.array([[0.25], [0.5]]), n=10, cfg=cfg)
    assert ece(table) == pytest.approx(0.3, abs=1e-15)


def test_ece_rejects_inconsistent_table():
    cfg = BinningConfig(num_bins=2)
    table = ReliabilityTable(counts=np.array([[1], [1]]), mean_pred=np.zeros((2, 1)),
                             empirical=np.zeros((2, 1)), n=3, cfg=cfg)
    with pytest.raises(InvalidInputError):
        ece(table)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.integers(2, 5), st.integers(2, 15), st.integers(0, 2**32 - 1))
def test_ece_matches_brute_force(n, k, bins, seed):
    rng = np.random.default_rng(seed)
    preds = random_probs(rng, n, k)
    labels = rng.integers(0, k, size=n)
    assert ece(reliability_table(preds, labels, BinningConfig(bins))) == brute_ece(preds, labels, bins)


def test_ece_invariances(rng):
    preds = random_probs(rng, 300, 4)
    labels = rng.integers(0, 4, size=300)
    base = ece(reliability_table(preds, labels))
    perm = rng.permutation(300)
    assert ece(reliability_table(preds[perm], labels[perm])) == pytest.approx(base, abs=1e-15)
    relabel = np.array([2, 0, 3, 1])
    moved = np.empty_like(preds)
    moved[:, relabel] = preds
    assert ece(reliability_table(moved, relabel[labels])) == pytest.approx(base, abs=1e-15)


def test_ece_small_for_calibrated_sampler(rng):
    preds = random_probs(rng, 50000, 3)
    labels = sample_labels(rng, preds)
    assert ece(reliability_table(preds, labels)) < 0.05


def test_ece_large_for_overconfident_sampler(rng):
    true = random_probs(rng, 20000, 3, scale=0.5)
    labels = sample_labels(rng, true)
    z = np.log(true) * 5
    over = np.exp(z - z.max(axis=1, keepdims=True))
    over /= over.sum(axis=1, keepdims=True)
    assert ece(reliability_table(over, labels)) > ece(reliability_table(true, labels)) + 0.05


def test_ties_go_to_lowest_index():
    preds = np.array([[0.4, 0.4, 0.2], [0.25, 0.375, 0.375]])
    np.testing.assert_array_equal(predicted_labels(preds), [0, 1])
    assert accuracy(preds, [0, 1]) == 1.0


def test_confusion_matrix_against_loop(rng):
    preds = random_probs(rng, 200, 4)
    labels = rng.integers(0, 4, size=200)
    expected = np.zeros((4, 4), dtype=int)
    for row, y in zip(preds, labels):
        expected[y, max(range(4), key=lambda j: (row[j], -j))] += 1
    np.testing.assert_array_equal(confusion_matrix(preds, labels), expected)
    assert accuracy(preds, labels) == np.trace(expected) / 200


def test_binary_f1_and_matthews_worked_example():
    # TP=1, FP=1, FN=0, TN=2
    labels = np.array([1, 0, 0, 0])
    preds = onehot_preds(np.array([1, 1, 0, 0]), 2)
    assert f1(preds, labels, "positive") == pytest.approx(2 / 3, abs=1e-15)
    assert matthews(preds, labels) == pytest.approx(2 / math.sqrt(12), abs=1e-15)


def test_degenerate_cases():
    labels = np.array([0, 0, 0])
    preds = onehot_preds(np.array([0, 0, 0]), 2)
    assert matthews(preds, labels) == 0.0
    # class 1 is never predicted nor present: its F1 is 0 by convention
    np.testing.assert_array_equal(per_class_f1(confusion_matrix(preds, labels)), [1.0, 0.0])
    assert f1(preds, labels) == 0.5


def test_binary_only_metrics_reject_multiclass(rng):
    preds = random_probs(rng, 10, 3)
    labels = rng.integers(0, 3, size=10)
    with pytest.raises(InvalidInputError):
        matthews(preds, labels)
    with pytest.raises(InvalidInputError):
        f1(preds, labels, "positive")
    with pytest.raises(InvalidInputError):
        f1(preds, labels, "micro")


def test_matthews_against_sign_convention(rng):
    labels = rng.integers(0, 2, size=500)
    assert matthews(onehot_preds(labels, 2), labels) == 1.0
    assert matthews(onehot_preds(1 - labels, 2), labels) == -1.0


def test_evaluate_report(rng):
    preds = random_probs(rng, 100, 2)
    labels = rng.integers(0, 2, size=100)
    rep = evaluate(preds, labels)
    assert rep.accuracy == accuracy(preds, labels)
    assert rep.positive_f1 == f1(preds, labels, "positive")
    assert rep.matthews == matthews(preds, labels)
    assert rep.ece == ece(reliability_table(preds, labels))
    assert math.fsum(rep.per_class_ece) / 2 == pytest.approx(rep.ece, abs=1e-15)
    assert rep.task_performance("f1_macro") == rep.macro_f1
    multi = evaluate(random_probs(rng, 30, 3), rng.integers(0, 3, size=30))
    with pytest.raises(InvalidInputError):
        multi.task_performance("matthews")
