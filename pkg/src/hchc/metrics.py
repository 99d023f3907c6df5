"""Clustering accuracy (best label matching) and normalised mutual information."""

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._validation import as_matrix, check_labels
from .exceptions import InvalidInputError


def hungarian(cost):
    """Minimum-cost perfect matching of a square cost matrix.

    Returns ``assignment`` with ``assignment[i]`` the column matched to row
    ``i``.  Among optimal matchings the lexicographically smallest one is
    returned.
    """
    cost = as_matrix(cost, "cost")
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise InvalidInputError(f"cost matrix must be square, got {cost.shape}; pad it first")
    rows, cols = linear_sum_assignment(cost)
    optimum = cost[rows, cols].sum()
    tol = 1e-9 * max(1.0, float(np.abs(cost).max()) * n)

    # Fix rows one at a time to the smallest column that keeps the optimum.
    assignment = np.empty(n, dtype=np.int64)
    free_rows = list(range(n))
    free_cols = list(range(n))
    fixed = 0.0
    for i in range(n):
        free_rows.remove(i)
        for j in sorted(free_cols):
            rest_cols = [c for c in free_cols if c != j]
            rest = 0.0
            if free_rows:
                sub = cost[np.ix_(free_rows, rest_cols)]
                r, c = linear_sum_assignment(sub)
                rest = sub[r, c].sum()
            if fixed + cost[i, j] + rest <= optimum + tol:
                assignment[i] = j
                fixed += cost[i, j]
                free_cols.remove(j)
                break
    return assignment


def confusion_matrix(pred, truth):
    """``counts[p, t]`` over a square ``k x k`` grid, ``k`` the larger label range."""
    pred = check_labels(pred, "pred")
    truth = check_labels(truth, "truth")
    if pred.shape != truth.shape:
        raise InvalidInputError(f"length mismatch: {pred.size} predictions vs {truth.size} labels")
    k = int(max(pred.max(initial=-1), truth.max(initial=-1))) + 1
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (pred, truth), 1)
    return counts


def acc(pred, truth):
    """Fraction of samples correct under the best one-to-one relabelling."""
    counts = confusion_matrix(pred, truth)
    n = counts.sum()
    if n == 0:
        raise InvalidInputError("no samples")
    match = hungarian(-counts)
    return float(counts[np.arange(counts.shape[0]), match].sum() / n)


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth):
    """Mutual information over the geometric mean of the two entropies.

    Two single-cluster partitions score 1; otherwise a zero entropy gives 0.
    """
    counts = confusion_matrix(pred, truth)
    n = counts.sum()
    if n == 0:
        raise InvalidInputError("no samples")
    nonzero = counts > 0
    if np.all(nonzero.sum(axis=0) <= 1) and np.all(nonzero.sum(axis=1) <= 1):
        # identical partitions up to relabelling; avoids 1 - ulp from rounding
        return 1.0
    h_pred = _entropy(counts.sum(axis=1), n)
    h_true = _entropy(counts.sum(axis=0), n)
    if h_pred == 0 or h_true == 0:
        return 1.0 if h_pred == h_true else 0.0
    joint = counts / n
    outer = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return float(min(1.0, max(0.0, mi / math.sqrt(h_pred * h_true))))
