import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hchc.exceptions import DegenerateDistanceError, ExactSolverLimitError, InvalidInputError
from hchc.layout import (
    CycleOrder,
    HamiltonianLayout,
    all_cycles,
    anchor_positions,
    brute_force_cycle,
    canonical_cycle,
    compute_angles,
    cycle_cost,
    dissimilarity,
    flag_outliers,
    greedy_cycle,
    held_karp_cycle,
    layout_quality,
    pearson_similarity,
    sample_positions,
    similarity_score,
    solve_cycle,
    weight_similarity,
)


def random_dissimilarity(c, rng):
    A = rng.uniform(size=(c, c))
    D = (A + A.T) / 2
    np.fill_diagonal(D, 0.0)
    return D


RING = np.array([
    [0, 1, 10, 1],
    [1, 0, 1, 10],
    [10, 1, 0, 1],
    [1, 10, 1, 0],
], dtype=float)


# --- similarity ----------------------------------------------------------

def test_pearson_self_similarity(rng):
    S = pearson_similarity(rng.dirichlet(np.ones(4), size=30))
    np.testing.assert_array_equal(np.diag(S), 1.0)
    np.testing.assert_array_equal(S, S.T)


def test_pearson_anti_correlated():
    P = np.array([[0.8, 0.2], [0.2, 0.8], [0.5, 0.5]])
    assert pearson_similarity(P)[0, 1] == pytest.approx(-1.0, abs=1e-15)


def test_pearson_affine_invariance(rng):
    a = rng.uniform(size=20)
    P = np.column_stack([a, 3 * a + 2, rng.uniform(size=20)])
    assert pearson_similarity(P)[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_pearson_matches_numpy(rng):
    P = rng.dirichlet(np.ones(5), size=50)
    np.testing.assert_allclose(pearson_similarity(P), np.corrcoef(P, rowvar=False), atol=1e-12)


def test_pearson_constant_column_warns():
    P = np.array([[0.2, 0.5, 0.3], [0.4, 0.5, 0.1], [0.1, 0.5, 0.4]])
    with pytest.warns(RuntimeWarning, match="constant"):
        S = pearson_similarity(P)
    assert S[1, 0] == 0 and S[1, 2] == 0 and S[1, 1] == 1


def test_weight_examples():
    S = np.array([[1.0, -0.5], [-0.5, 1.0]])
    assert weight_similarity(S, 1.0) is not S
    np.testing.assert_array_equal(weight_similarity(S, 1.0), S)
    assert weight_similarity(S, 2.0)[0, 1] == -0.25
    np.testing.assert_array_equal(weight_similarity(S, 0.0), [[1.0, -1.0], [-1.0, 1.0]])


def test_weight_sign_of_zero():
    assert weight_similarity([[1.0, 0.0], [0.0, 1.0]], 2.0)[0, 1] == 0.0
    assert weight_similarity([[1.0, 0.0], [0.0, 1.0]], 0.0)[0, 1] == -1.0


@given(s=st.floats(-1, 1), g=st.floats(0, 5))
def test_weight_stays_in_range(s, g):
    t = weight_similarity([[1.0, s], [s, 1.0]], g)[0, 1]
    assert -1.0 <= t <= 1.0


def test_dissimilarity_two_clusters(rng):
    for s in (-0.7, 0.0, 0.9):
        D = dissimilarity(np.array([[1.0, s], [s, 1.0]]))
        assert D[0, 1] == 1.0


def test_dissimilarity_three_clusters():
    T = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, -0.5], [0.0, -0.5, 1.0]])
    D = dissimilarity(T)
    np.testing.assert_allclose([D[0, 1], D[0, 2], D[1, 2]], [1 / 6, 1 / 3, 1 / 2], atol=1e-15)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(2, 12))
def test_dissimilarity_normalised(seed, c):
    rng = np.random.default_rng(seed)
    S = pearson_similarity(rng.dirichlet(np.ones(c), size=40))
    D = dissimilarity(S)
    assert abs(D[np.triu_indices(c, 1)].sum() - 1.0) < 1e-12
    assert np.all(np.diag(D) == 0) and np.array_equal(D, D.T)


def test_dissimilarity_degenerate():
    with pytest.raises(DegenerateDistanceError):
        dissimilarity(np.ones((3, 3)))


# --- cycles ---------------------------------------------------------------

def test_canonical_cycle():
    assert canonical_cycle([2, 0, 3, 1]) == (0, 2, 1, 3)
    assert canonical_cycle([3, 2, 1, 0]) == (0, 1, 2, 3)
    assert canonical_cycle([1, 0, 2]) == (0, 1, 2)


def test_all_cycles_count():
    for c in range(3, 8):
        cycles = list(all_cycles(c))
        assert len(cycles) == max(1, math.factorial(c - 1) // 2)
        assert len(set(cycles)) == len(cycles)
        assert all(canonical_cycle(o) == o for o in cycles)


def test_held_karp_three_clusters(rng):
    cyc = held_karp_cycle(random_dissimilarity(3, rng))
    assert cyc.order == (0, 1, 2)


def test_ring_graph_both_solvers():
    for solver in (held_karp_cycle, greedy_cycle, brute_force_cycle):
        cyc = solver(RING)
        assert cyc.order == (0, 1, 2, 3) and cyc.total_cost == 4.0


def test_held_karp_matches_brute_force_c7(rng):
    D = random_dissimilarity(7, rng)
    assert held_karp_cycle(D).total_cost == brute_force_cycle(D).total_cost


def test_held_karp_limit(rng):
    with pytest.raises(ExactSolverLimitError):
        held_karp_cycle(random_dissimilarity(6, rng), exact_cycle_max=5)


def test_held_karp_sixteen_clusters(rng):
    D = random_dissimilarity(16, rng)
    exact = held_karp_cycle(D)
    assert sorted(exact.order) == list(range(16))
    assert exact.total_cost <= greedy_cycle(D).total_cost


def test_solve_cycle_switches_to_greedy(rng):
    assert solve_cycle(random_dissimilarity(6, rng), exact_cycle_max=5).solver == "greedy"
    assert solve_cycle(random_dissimilarity(5, rng), exact_cycle_max=5).solver == "exact"


def test_brute_force_three_clusters(rng):
    D = random_dissimilarity(3, rng)
    assert brute_force_cycle(D).total_cost == pytest.approx(D[0, 1] + D[1, 2] + D[2, 0], rel=1e-15)


def test_brute_force_limit(rng):
    with pytest.raises(InvalidInputError):
        brute_force_cycle(random_dissimilarity(10, rng))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(4, 7))
def test_relabelling_keeps_optimal_cost(seed, c):
    rng = np.random.default_rng(seed)
    D = random_dissimilarity(c, rng)
    perm = rng.permutation(c)
    Dp = D[np.ix_(perm, perm)]
    assert brute_force_cycle(Dp).total_cost == pytest.approx(brute_force_cycle(D).total_cost, rel=1e-14)
    assert held_karp_cycle(Dp).total_cost == pytest.approx(held_karp_cycle(D).total_cost, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(3, 12))
def test_greedy_is_valid_and_not_better(seed, c):
    D = random_dissimilarity(c, np.random.default_rng(seed))
    g = greedy_cycle(D)
    assert sorted(g.order) == list(range(c))
    assert canonical_cycle(g.order) == g.order
    assert g.total_cost == cycle_cost(g.order, D)
    assert g.total_cost >= held_karp_cycle(D).total_cost


def test_cycle_order_rejects_non_permutation():
    with pytest.raises(InvalidInputError):
        CycleOrder((0, 0, 1), 1.0)


# --- similarity score --------------------------------------------------------

def test_similarity_score_constant(rng):
    S = np.full((5, 5), 0.3)
    for order in [(0, 1, 2, 3, 4), (0, 3, 1, 4, 2)]:
        assert similarity_score(order, S) == pytest.approx(1.5, rel=1e-15)


def test_similarity_score_ring_hand_evaluation():
    Dn = RING / RING[np.triu_indices(4, 1)].sum()
    S = 1 - Dn
    # edges (0,1),(1,2),(2,3),(3,0) each of normalised length 1/24
    assert similarity_score((0, 1, 2, 3), S) == pytest.approx(4 * (1 - 1 / 24), rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(4, 8))
def test_exact_cycle_maximises_similarity(seed, c):
    rng = np.random.default_rng(seed)
    S = pearson_similarity(rng.dirichlet(np.ones(c), size=60))
    best = max(similarity_score(o, S) for o in all_cycles(c))
    cyc = held_karp_cycle(dissimilarity(S))
    assert similarity_score(cyc, S) == pytest.approx(best, abs=1e-12)


# --- angles and positions -----------------------------------------------------

def test_angles_first_zero_and_equal_arcs():
    c = 6
    D = np.ones((c, c)) - np.eye(c)
    angles = compute_angles(tuple(range(c)), D)
    assert angles[0] == 0.0
    np.testing.assert_allclose(angles, 2 * np.pi * np.arange(c) / c, atol=1e-12)


def test_angles_three_cluster_example():
    D = np.zeros((3, 3))
    D[0, 1] = D[1, 0] = 0.2
    D[1, 2] = D[2, 1] = 0.3
    D[2, 0] = D[0, 2] = 0.5
    np.testing.assert_allclose(compute_angles((0, 1, 2), D), [0, 0.4 * np.pi, np.pi], atol=1e-15)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(3, 10))
def test_angles_close_the_circle(seed, c):
    D = random_dissimilarity(c, np.random.default_rng(seed)) + 0.01
    np.fill_diagonal(D, 0)
    order = tuple(np.random.default_rng(seed).permutation(c))
    angles = compute_angles(order, D)
    closing = 2 * np.pi * D[order[-1], order[0]] / cycle_cost(order, D)
    assert abs(angles[-1] + closing - 2 * np.pi) < 1e-9
    assert np.all(np.diff(angles) > 0)


def test_angles_degenerate():
    with pytest.raises(DegenerateDistanceError):
        compute_angles((0, 1, 2), np.zeros((3, 3)))


def test_angles_warn_on_coincident_anchors():
    D = np.array([[0, 0, 1], [0, 0, 1], [1, 1, 0]], dtype=float)
    with pytest.warns(RuntimeWarning):
        compute_angles((0, 1, 2), D)


def test_anchor_examples():
    pts = anchor_positions([0.0, np.pi / 2, np.pi], 1.0)
    np.testing.assert_allclose(pts, [[1, 0], [0, 1], [-1, 0]], atol=1e-15)
    np.testing.assert_allclose(anchor_positions([np.pi], 2.0), [[-2, 0]], atol=1e-15)
    r = np.linalg.norm(anchor_positions(np.linspace(0, 6, 13), 3.5), axis=1)
    np.testing.assert_allclose(r, 3.5, atol=1e-12)


def test_anchor_rejects_bad_radius():
    with pytest.raises(InvalidInputError):
        anchor_positions([0.0], 0.0)


def test_sample_positions_examples():
    anchors = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    pos = sample_positions([[0.5, 0.5, 0.0]], anchors, (0, 1, 2))
    np.testing.assert_array_equal(pos, [[0.5, 0.5]])
    # anchors[i] belongs to cluster order[i]
    pos = sample_positions([[0.0, 1.0, 0.0]], anchors, (0, 2, 1))
    np.testing.assert_array_equal(pos, [[-1.0, 0.0]])


def test_uniform_rows_map_to_origin():
    c = 7
    anchors = anchor_positions(2 * np.pi * np.arange(c) / c)
    pos = sample_positions(np.full((3, c), 1 / c), anchors, tuple(range(c)))
    assert np.abs(pos).max() < 1e-9


@settings(max_examples=40)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(3, 9))
def test_samples_inside_circle(seed, c):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(c, 0.3), size=50)
    est = HamiltonianLayout(radius=2.0).fit(P)
    assert np.all(np.linalg.norm(est.transform(P), axis=1) <= 2.0 + 1e-12)


# --- outliers and quality -------------------------------------------------------

def test_outlier_examples():
    P = np.array([[1.0, 0, 0, 0], [0.25, 0.25, 0.25, 0.25], [0.45, 0.2, 0.2, 0.15]])
    assert flag_outliers(P, 0.5).tolist() == [False, True, True]
    assert flag_outliers(P, 0.3).tolist() == [False, True, False]


def test_outlier_threshold_range():
    P = np.full((2, 4), 0.25)
    with pytest.raises(InvalidInputError):
        flag_outliers(P, 0.2)
    with pytest.raises(InvalidInputError):
        flag_outliers(P, 1.0)


def test_layout_quality_examples(rng):
    c, n = 5, 12
    anchors = anchor_positions(2 * np.pi * np.arange(c) / c, radius=3.0)
    order = tuple(range(c))
    onehot = np.eye(c)[rng.integers(0, c, size=n)]
    assert layout_quality(onehot, anchors, order) == pytest.approx(n, rel=1e-12)
    assert layout_quality(np.full((n, c), 1 / c), anchors, order) == pytest.approx(0.0, abs=1e-20)
    P = rng.dirichlet(np.ones(c), size=n)
    unit = anchors / 3.0
    direct = sum(np.sum((p @ unit) ** 2) for p in P)
    assert layout_quality(P, anchors, order) == pytest.approx(direct, rel=1e-12)


# --- estimator ---------------------------------------------------------------------

def test_layout_one_hot_rows_on_anchors(rng):
    c = 5
    P = np.vstack([np.eye(c), rng.dirichlet(np.ones(c), size=20)])
    est = HamiltonianLayout().fit(P)
    layout = est.layout(P)
    for j in range(c):
        assert np.linalg.norm(layout.sample_coords[j] - layout.cluster_anchor(j)) < 1e-12


def test_layout_attributes_consistent(rng):
    P = rng.dirichlet(np.ones(6), size=40)
    est = HamiltonianLayout(gamma_exponent=2.0, radius=1.5).fit(P)
    assert est.cycle_.solver == "exact"
    assert est.similarity_score_ == similarity_score(est.cycle_, est.similarity_)
    np.testing.assert_array_equal(
        est.anchors_, np.column_stack([1.5 * np.cos(est.angles_), 1.5 * np.sin(est.angles_)])
    )
    assert est.quality(P) == layout_quality(P, est.anchors_, est.cycle_, 1.5)


def test_layout_gamma_one_same_as_unweighted(rng):
    P = rng.dirichlet(np.ones(5), size=30)
    est = HamiltonianLayout(gamma_exponent=1.0).fit(P)
    np.testing.assert_array_equal(est.dissimilarity_, dissimilarity(pearson_similarity(P)))


def test_layout_relabelling_invariance(rng):
    P = rng.dirichlet(np.ones(6), size=40)
    perm = rng.permutation(6)
    a = HamiltonianLayout().fit(P)
    b = HamiltonianLayout().fit(P[:, perm])
    assert b.cycle_.total_cost == pytest.approx(a.cycle_.total_cost, rel=1e-13)


def test_layout_rejects_wrong_width(rng):
    est = HamiltonianLayout().fit(rng.dirichlet(np.ones(4), size=10))
    with pytest.raises(InvalidInputError):
        est.transform(rng.dirichlet(np.ones(3), size=2))


def test_layout_constant_cluster_still_lays_out():
    P = np.array([[0.6, 0.2, 0.2], [0.3, 0.2, 0.5], [0.1, 0.2, 0.7], [0.5, 0.2, 0.3]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = HamiltonianLayout().fit(P)
    assert sorted(est.cycle_.order) == [0, 1, 2]
