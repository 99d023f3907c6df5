"""Circular layout of cluster distributions ordered by an optimal Hamiltonian cycle.

The columns of a probability matrix (one per cluster) are compared with the
Pearson correlation, turned into normalised dissimilarities and ordered by
the shortest Hamiltonian cycle through them.  Each cluster becomes an anchor
on a circle, spaced by the dissimilarity to its predecessor on the cycle,
and each sample is placed at the probability-weighted mean of the anchors.
"""

from dataclasses import dataclass, field
from itertools import permutations
import math
import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, check_dissimilarity, check_probability_matrix
from .exceptions import DegenerateDistanceError, ExactSolverLimitError, InvalidInputError

EXACT_CYCLE_MAX = 16
BRUTE_FORCE_MAX = 9
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CycleOrder:
    """A Hamiltonian cycle over cluster indices in canonical form."""

    order: tuple
    total_cost: float
    solver: str = "exact"

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise InvalidInputError(f"{self.order} is not a permutation of 0..c-1")

    def __len__(self):
        return len(self.order)


@dataclass
class CircularLayout:
    radius: float
    cycle: CycleOrder
    anchor_angles: np.ndarray
    anchor_coords: np.ndarray
    sample_coords: np.ndarray
    outlier_flags: np.ndarray
    similarity_score: float = field(default=float("nan"))

    @property
    def order(self):
        return self.cycle.order

    def cluster_anchor(self, cluster):
        """Anchor coordinates of cluster id ``cluster``."""
        return self.anchor_coords[self.cycle.order.index(cluster)]


def pearson_similarity(P):
    """Pearson correlation between the columns of ``P``.

    Columns with zero variance get similarity 0 to every other column (and 1
    to themselves); a warning names them.
    """
    P = as_matrix(P, "P", min_rows=2)
    n = P.shape[0]
    centred = P - P.mean(axis=0)
    norms = np.sqrt(np.sum(centred * centred, axis=0))
    dead = norms <= 1e-12 * math.sqrt(n) * max(1.0, float(np.abs(P).max()))
    safe = np.where(dead, 1.0, norms)
    S = (centred.T @ centred) / np.outer(safe, safe)
    if dead.any():
        warnings.warn(
            f"clusters {np.flatnonzero(dead).tolist()} have constant probability; "
            "their similarity is set to 0",
            RuntimeWarning,
            stacklevel=2,
        )
        S[dead, :] = 0.0
        S[:, dead] = 0.0
    S = np.clip((S + S.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(S, 1.0)
    return S


def weight_similarity(S, gamma_exponent=1.0):
    """``sgn(s) * |s|**gamma`` with ``sgn(0) = -1``; ``gamma == 1`` is a copy."""
    if gamma_exponent < 0:
        raise InvalidInputError("gamma_exponent must be >= 0")
    S = as_matrix(S, "S")
    if gamma_exponent == 1:
        return S.copy()
    sign = np.where(S > 0, 1.0, -1.0)
    return sign * np.abs(S) ** gamma_exponent


def dissimilarity(T):
    """``(1 - t_ij)`` normalised so the strict upper triangle sums to one."""
    T = as_matrix(T, "T")
    c = T.shape[0]
    if T.shape != (c, c) or c < 2:
        raise InvalidInputError(f"need a square matrix with c >= 2, got {T.shape}")
    raw = 1.0 - T
    iu = np.triu_indices(c, k=1)
    total = float(np.sum(raw[iu]))
    if not total > 0:
        raise DegenerateDistanceError("all cluster similarities equal 1; dissimilarities are undefined")
    D = raw / total
    D = (D + D.T) / 2.0
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def canonical_cycle(order):
    """Rotate to start at the smallest index; orient so order[1] < order[-1]."""
    order = list(order)
    start = order.index(min(order))
    order = order[start:] + order[:start]
    if len(order) > 2 and order[1] > order[-1]:
        order = [order[0]] + order[:0:-1]
    return tuple(int(o) for o in order)


def cycle_cost(order, D):
    """Sum of consecutive edge weights plus the closing edge."""
    total = 0.0
    for a, b in zip(order[:-1], order[1:]):
        total += D[a, b]
    return float(total + D[order[-1], order[0]])


def _finish(order, D, solver):
    order = canonical_cycle(order)
    return CycleOrder(order, cycle_cost(order, D), solver)


def held_karp_cycle(D, exact_cycle_max=EXACT_CYCLE_MAX):
    """Exact minimum-cost Hamiltonian cycle by bitmask dynamic programming.

    ``best[mask, j]`` is the cheapest path that starts at cluster 0, visits
    exactly the clusters in ``mask`` and ends at ``j``.  O(c^2 2^c) time.
    """
    D = check_dissimilarity(D)
    c = D.shape[0]
    if c > exact_cycle_max:
        raise ExactSolverLimitError(
            f"{c} clusters exceed exact_cycle_max={exact_cycle_max}; use greedy_cycle"
        )
    if c <= 3:
        return _finish(range(c), D, "exact")

    full = 1 << c
    best = np.full((full, c), np.inf)
    parent = np.full((full, c), -1, dtype=np.int64)
    for j in range(1, c):
        best[1 | (1 << j), j] = D[0, j]
    bits = 1 << np.arange(c)
    # D_T[j, k] = D[k, j], rows indexed by the end vertex
    D_T = np.ascontiguousarray(D.T)
    for mask in range(1, full, 2):
        members = np.flatnonzero(mask & bits)
        if members.size < 3:
            continue
        ends = members[1:]
        prev = best[mask ^ bits[ends]] + D_T[ends]
        k = np.argmin(prev, axis=1)
        best[mask, ends] = prev[np.arange(ends.size), k]
        parent[mask, ends] = k

    mask = full - 1
    closing = best[mask, 1:] + D[1:, 0]
    last = int(np.argmin(closing)) + 1
    order = [last]
    while True:
        prev = int(parent[mask, order[-1]])
        mask ^= 1 << order[-1]
        if prev < 0:
            break
        order.append(prev)
    order.append(0)
    return _finish(order[::-1], D, "exact")


def greedy_cycle(D):
    """Greedy edge selection: repeatedly take the shortest edge that keeps
    every vertex at degree <= 2 and closes no premature cycle, then join the
    two path ends.
    """
    D = check_dissimilarity(D)
    c = D.shape[0]
    if c <= 3:
        return _finish(range(c), D, "greedy")
    iu, ju = np.triu_indices(c, k=1)
    ranked = np.lexsort((ju, iu, D[iu, ju]))
    root = list(range(c))

    def find(a):
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    degree = [0] * c
    adj = [[] for _ in range(c)]
    taken = 0
    for e in ranked:
        i, j = int(iu[e]), int(ju[e])
        if degree[i] == 2 or degree[j] == 2:
            continue
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        root[ri] = rj
        degree[i] += 1
        degree[j] += 1
        adj[i].append(j)
        adj[j].append(i)
        taken += 1
        if taken == c - 1:
            break

    start = min(v for v in range(c) if degree[v] == 1)
    order = [start]
    prev = -1
    while len(order) < c:
        nxt = next(v for v in adj[order[-1]] if v != prev)
        prev = order[-1]
        order.append(nxt)
    return _finish(order, D, "greedy")


def all_cycles(c):
    """Every distinct Hamiltonian cycle on ``c`` vertices, in canonical form."""
    if c <= 3:
        yield tuple(range(c))
        return
    for perm in permutations(range(1, c)):
        if perm[0] < perm[-1]:
            yield (0, *perm)


def brute_force_cycle(D):
    """Exhaustive search over the (c-1)!/2 distinct cycles; c <= 9."""
    D = check_dissimilarity(D)
    c = D.shape[0]
    if c > BRUTE_FORCE_MAX:
        raise InvalidInputError(f"brute force limited to c <= {BRUTE_FORCE_MAX}, got {c}")
    best_order, best_cost = None, math.inf
    for order in all_cycles(c):
        cost = cycle_cost(order, D)
        if cost < best_cost:
            best_order, best_cost = order, cost
    return CycleOrder(best_order, best_cost, "brute_force")


def solve_cycle(D, exact_cycle_max=EXACT_CYCLE_MAX):
    """Exact cycle when ``c <= exact_cycle_max``, greedy otherwise."""
    D = check_dissimilarity(D)
    if D.shape[0] <= exact_cycle_max:
        return held_karp_cycle(D, exact_cycle_max)
    return greedy_cycle(D)


def similarity_score(order, S):
    """Sum of similarities along the cycle's edges, closing edge included."""
    if isinstance(order, CycleOrder):
        order = order.order
    S = np.asarray(S, dtype=np.float64)
    total = 0.0
    for a, b in zip(order[:-1], order[1:]):
        total += S[a, b]
    return float(total + S[order[0], order[-1]])


def compute_angles(order, D):
    """Anchor angle per cycle position, arcs proportional to edge dissimilarity."""
    if isinstance(order, CycleOrder):
        order = order.order
    D = np.asarray(D, dtype=np.float64)
    arcs = np.array([D[order[i], order[i - 1]] for i in range(1, len(order))])
    closing = D[order[-1], order[0]]
    denom = float(arcs.sum() + closing)
    if not denom > 0:
        raise DegenerateDistanceError("cycle has zero total dissimilarity")
    if np.any(arcs == 0) or closing == 0:
        warnings.warn("zero dissimilarity on the cycle: some anchors coincide", RuntimeWarning, stacklevel=2)
    return np.concatenate([[0.0], np.cumsum(TWO_PI * arcs / denom)])


def anchor_positions(angles, radius=1.0):
    if not radius > 0:
        raise InvalidInputError("radius must be > 0")
    angles = np.asarray(angles, dtype=np.float64)
    return np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])


def sample_positions(P, anchors, order):
    """Probability-weighted mean of the anchors; ``anchors[i]`` belongs to
    cluster ``order[i]``.
    """
    if isinstance(order, CycleOrder):
        order = order.order
    P = as_matrix(P, "P", min_rows=0) if np.size(P) else np.zeros((0, len(order)))
    anchors = np.asarray(anchors, dtype=np.float64)
    if anchors.shape != (len(order), 2) or P.shape[1] != len(order):
        raise InvalidInputError(
            f"P has {P.shape[1]} columns, anchors {anchors.shape}, cycle {len(order)} clusters"
        )
    return P[:, list(order)] @ anchors


def flag_outliers(P, threshold=0.5):
    """True where a sample's largest cluster probability is below ``threshold``.

    Requires ``1/c <= threshold < 1``.
    """
    P = as_matrix(P, "P", min_rows=0) if np.size(P) else np.zeros((0, 2))
    c = P.shape[1]
    if not 1.0 / c <= threshold < 1.0:
        raise InvalidInputError(f"threshold must lie in [1/{c}, 1), got {threshold}")
    return P.max(axis=1) < threshold if P.shape[0] else np.zeros(0, dtype=bool)


def layout_quality(P, anchors, order, radius=None):
    """Sum of squared distances of the samples from the centre, on a unit circle."""
    anchors = np.asarray(anchors, dtype=np.float64)
    if radius is None:
        radius = float(np.linalg.norm(anchors[0]))
    coords = sample_positions(P, anchors / radius, order)
    return float(np.sum(coords * coords))


class HamiltonianLayout(TransformerMixin, BaseEstimator):
    """Map cluster probability distributions into a disc.

    ``fit`` orders the clusters (columns of ``P``) on the cheapest
    Hamiltonian cycle of their correlation dissimilarities and places one
    anchor per cluster on the circle; ``transform`` returns 2-D sample
    coordinates.

    Parameters
    ----------
    gamma_exponent : float, default=1.0
        Exponent of the signed similarity weighting; 1 keeps raw correlations.
    radius : float, default=1.0
    exact_cycle_max : int, default=16
        Largest cluster count solved exactly; larger problems use the greedy
        edge heuristic.
    outlier_threshold : float, default=0.5
        Samples whose top probability falls below this are flagged.
    """

    def __init__(self, gamma_exponent=1.0, radius=1.0, exact_cycle_max=EXACT_CYCLE_MAX,
                 outlier_threshold=0.5):
        self.gamma_exponent = gamma_exponent
        self.radius = radius
        self.exact_cycle_max = exact_cycle_max
        self.outlier_threshold = outlier_threshold

    def fit(self, P, y=None):
        P = check_probability_matrix(P)
        if P.shape[0] < 2 or P.shape[1] < 2:
            raise InvalidInputError("need at least 2 samples and 2 clusters")
        self.similarity_ = pearson_similarity(P)
        self.weighted_similarity_ = weight_similarity(self.similarity_, self.gamma_exponent)
        self.dissimilarity_ = dissimilarity(self.weighted_similarity_)
        self.cycle_ = solve_cycle(self.dissimilarity_, self.exact_cycle_max)
        self.angles_ = compute_angles(self.cycle_, self.dissimilarity_)
        self.anchors_ = anchor_positions(self.angles_, self.radius)
        self.similarity_score_ = similarity_score(self.cycle_, self.similarity_)
        self.n_features_in_ = P.shape[1]
        return self

    def _check(self, P):
        check_is_fitted(self, "cycle_")
        P = check_probability_matrix(P) if np.size(P) else np.zeros((0, self.n_features_in_))
        if P.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"P has {P.shape[1]} clusters, layout fitted with {self.n_features_in_}")
        return P

    def transform(self, P):
        P = self._check(P)
        return sample_positions(P, self.anchors_, self.cycle_)

    def layout(self, P):
        """Full :class:`CircularLayout` of ``P`` under the fitted anchors."""
        P = self._check(P)
        return CircularLayout(
            radius=float(self.radius),
            cycle=self.cycle_,
            anchor_angles=self.angles_.copy(),
            anchor_coords=self.anchors_.copy(),
            sample_coords=sample_positions(P, self.anchors_, self.cycle_),
            outlier_flags=flag_outliers(P, self.outlier_threshold),
            similarity_score=self.similarity_score_,
        )

    def quality(self, P):
        return layout_quality(self._check(P), self.anchors_, self.cycle_, self.radius)
