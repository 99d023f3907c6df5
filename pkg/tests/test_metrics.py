from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import normalized_mutual_info_score

from hchc.exceptions import InvalidInputError
from hchc.metrics import acc, confusion_matrix, hungarian, nmi


def brute_acc(pred, truth):
    k = max(max(pred), max(truth)) + 1
    best = 0
    for perm in permutations(range(k)):
        best = max(best, sum(perm[p] == t for p, t in zip(pred, truth)))
    return best / len(pred)


def test_hungarian_identity():
    cost = 1 - np.eye(4)
    assert hungarian(cost).tolist() == [0, 1, 2, 3]


def test_hungarian_two_by_two():
    cost = np.array([[1.0, 2.0], [2.0, 1.0]])
    match = hungarian(cost)
    assert match.tolist() == [0, 1] and cost[[0, 1], match].sum() == 2.0


@given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
def test_hungarian_selects_negated_permutation(seed, n):
    perm = np.random.default_rng(seed).permutation(n)
    assert hungarian(-np.eye(n)[perm]).tolist() == perm.tolist()


def test_hungarian_lexicographic_tie_break():
    # every matching costs 0
    assert hungarian(np.zeros((3, 3))).tolist() == [0, 1, 2]
    cost = np.array([[0.0, 0.0, 5.0], [0.0, 0.0, 5.0], [5.0, 5.0, 0.0]])
    assert hungarian(cost).tolist() == [0, 1, 2]


@settings(max_examples=60)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
def test_hungarian_is_optimal(seed, n):
    rng = np.random.default_rng(seed)
    cost = rng.integers(0, 4, size=(n, n)).astype(float)
    match = hungarian(cost)
    total = cost[np.arange(n), match].sum()
    best = min(cost[np.arange(n), list(p)].sum() for p in permutations(range(n)))
    assert total == best
    assert total <= cost[np.arange(n), np.arange(n)].sum()
    # lexicographically smallest among optimal matchings
    optimal = [p for p in permutations(range(n)) if cost[np.arange(n), list(p)].sum() == best]
    assert tuple(match) == min(optimal)


def test_hungarian_rejects_rectangular():
    with pytest.raises(InvalidInputError):
        hungarian(np.zeros((2, 3)))


def test_acc_examples():
    truth = [0, 0, 1, 1, 2]
    assert acc(truth, truth) == 1.0
    assert acc([2, 2, 0, 0, 1], truth) == 1.0
    assert acc([1, 1, 1], [0, 0, 1]) == pytest.approx(2 / 3, rel=1e-15)


def test_acc_length_mismatch():
    with pytest.raises(InvalidInputError):
        acc([0, 1], [0, 1, 1])


def test_confusion_matrix_padded():
    counts = confusion_matrix([0, 0, 0], [0, 1, 2])
    assert counts.shape == (3, 3) and counts.sum() == 3


@settings(max_examples=60)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 30), kp=st.integers(1, 5), kt=st.integers(1, 5))
def test_acc_matches_brute_force(seed, n, kp, kt):
    rng = np.random.default_rng(seed)
    pred, truth = rng.integers(0, kp, n).tolist(), rng.integers(0, kt, n).tolist()
    assert acc(pred, truth) == pytest.approx(brute_acc(pred, truth), rel=1e-15)


def test_nmi_examples():
    truth = [0, 1] * 10
    assert nmi(truth, truth) == 1.0
    assert nmi([1, 0] * 10, truth) == 1.0


def test_nmi_independent_coin():
    rng = np.random.default_rng(0)
    truth = np.repeat([0, 1], 50_000)
    pred = rng.integers(0, 2, size=truth.size)
    assert nmi(pred, truth) < 0.01


def test_nmi_zero_entropy_conventions():
    assert nmi([0, 0, 0], [0, 0, 0]) == 1.0
    assert nmi([0, 0, 0], [0, 1, 1]) == 0.0
    assert nmi([0, 1, 1], [0, 0, 0]) == 0.0


@settings(max_examples=100)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 60), kp=st.integers(1, 6), kt=st.integers(1, 6))
def test_nmi_matches_sklearn(seed, n, kp, kt):
    rng = np.random.default_rng(seed)
    pred, truth = rng.integers(0, kp, n), rng.integers(0, kt, n)
    expected = normalized_mutual_info_score(truth, pred, average_method="geometric")
    assert nmi(pred, truth) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=60)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 50), k=st.integers(1, 8))
def test_metrics_invariant_under_relabelling(seed, n, k):
    rng = np.random.default_rng(seed)
    pred, truth = rng.integers(0, k, n), rng.integers(0, k, n)
    perm = rng.permutation(k)
    assert acc(perm[pred], truth) == acc(pred, truth)
    assert nmi(perm[pred], truth) == pytest.approx(nmi(pred, truth), abs=1e-14)
    assert 0.0 <= acc(pred, truth) <= 1.0 and 0.0 <= nmi(pred, truth) <= 1.0


def test_permuted_truth_is_exactly_one():
    rng = np.random.default_rng(7)
    truth = rng.integers(0, 10, size=5000)
    pred = rng.permutation(10)[truth]
    assert acc(pred, truth) == 1.0 and nmi(pred, truth) == 1.0
