import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from planted import planted_instance, same_partition
from topicfuse.matching import (
    ClusterAssignment,
    NoisyAssociationGraph,
    build_association_graph,
    clear_rectify,
    estimate_num_labels,
    hungarian_sequential_from_similarity,
    hungarian_sequential_match,
    hungarian_solve,
    id_based_match,
    match,
    normalized_laplacian,
    pairwise_f1,
)
from topicfuse.similarity import SimilarityMatrix, pairwise_similarity_matrix


def brute_force_min(C):
    n, m = C.shape
    if n <= m:
        return min(math.fsum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))
    return brute_force_min(C.T)


# -- association graph -------------------------------------------------------------------

def test_sigma_below_min_gives_complete_graph():
    S = np.array([[1.0, 0.3, 0.4], [0.3, 1.0, 0.35], [0.4, 0.35, 1.0]])
    g = build_association_graph(SimilarityMatrix(S, [(0, 0), (1, 0), (2, 0)], "to"), 0.29)
    assert g.adjacency.min() == 1


def test_no_cross_edge_below_sigma():
    S = np.array([[1.0, 0.6], [0.6, 1.0]])
    g = build_association_graph(SimilarityMatrix(S, [(0, 0), (1, 0)], "to"), 0.75)
    assert g.adjacency.tolist() == [[1, 0], [0, 1]]


def test_edge_kept_at_exact_threshold():
    S = np.array([[1.0, 0.75], [0.75, 1.0]])
    g = build_association_graph(SimilarityMatrix(S, [(0, 0), (1, 0)], "to"), 0.75)
    assert g.adjacency[0, 1] == 1


@pytest.mark.parametrize("sigma", [0.0, 1.0, -0.2, 1.5])
def test_sigma_outside_open_interval_rejected(sigma):
    S = np.eye(2)
    with pytest.raises(ValueError):
        build_association_graph(SimilarityMatrix(S, [(0, 0), (1, 0)], "to"), sigma)


# -- CLEAR -----------------------------------------------------------------------------------

def test_single_vertex():
    a = clear_rectify(NoisyAssociationGraph(np.ones((1, 1), np.int8), [(0, 0)], 0.75))
    assert a.num_global_labels == 1 and a.labels.tolist() == [0]


def test_empty_graph_rejected():
    with pytest.raises(ValueError):
        clear_rectify(NoisyAssociationGraph(np.zeros((0, 0), np.int8), [], 0.75))


def test_disjoint_cliques_eigen_oracle():
    rng = np.random.default_rng(11)
    for _ in range(30):
        g, truth = planted_instance(rng, int(rng.integers(2, 8)), int(rng.integers(1, 7)))
        m = len(set(truth.tolist()))
        # eigen-oracle: plain L = D - A of a disjoint-clique graph has exactly m zero eigenvalues
        A = g.adjacency.astype(float)
        L = np.diag(A.sum(1)) - A
        assert int(np.sum(np.abs(np.linalg.eigvalsh(L)) < 1e-9)) == m
        assert estimate_num_labels(A) == m
        a = clear_rectify(g)
        assert a.num_global_labels == m and a.estimated_labels == m
        assert same_partition(a.labels, truth)


def test_normalized_laplacian_formula():
    A = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
    D = np.diag(A.sum(1))
    S = np.diag(1 / np.sqrt(A.sum(1) + 1))
    np.testing.assert_allclose(normalized_laplacian(A), S @ (D - A) @ S, atol=1e-15)


def test_two_robots_permuted_descriptors_recover_permutation():
    rng = np.random.default_rng(5)
    V, K = 200, 5
    d = np.zeros((K, V))
    for k in range(K):
        d[k, rng.choice(V, 20, replace=False)] = rng.dirichlet(np.ones(20))
    perm = rng.permutation(K)
    sim = pairwise_similarity_matrix([d, d[perm]], "cosine")
    a = clear_rectify(build_association_graph(sim, 0.75))
    corr = a.correspondences()
    found = {corr[1][j]: j for j in range(K)}
    recovered = [found[corr[0][i]] for i in range(K)]
    # robot 1's topic j is robot 0's topic perm[j]
    assert [perm[j] for j in recovered] == list(range(K))
    # brute force: the planted permutation is the only one scoring all ones
    block = sim.scores[:K, K:]
    perfect = [p for p in itertools.permutations(range(K)) if all(block[i, p[i]] >= 0.75 for i in range(K))]
    assert perfect == [tuple(recovered)]


def test_clear_on_similarity_of_disjoint_topics_keeps_them_apart():
    d = np.eye(4)
    sim = pairwise_similarity_matrix([d[:2], d[2:]], "to")
    a = clear_rectify(build_association_graph(sim, 0.75))
    assert a.num_global_labels == 4


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_clear_invariant_to_vertex_order(seed):
    rng = np.random.default_rng(seed)
    g, _ = planted_instance(rng, int(rng.integers(2, 6)), int(rng.integers(1, 6)), flip=0.1)
    a = clear_rectify(g)
    order = rng.permutation(len(g))
    h = NoisyAssociationGraph(g.adjacency[np.ix_(order, order)], [g.registry[i] for i in order], g.sigma)
    b = clear_rectify(h)
    assert b.estimated_labels == a.estimated_labels
    assert a.correspondences() == b.correspondences()


# -- baselines -------------------------------------------------------------------------------

def test_id_based_examples():
    a = id_based_match([3, 3])
    assert a.num_global_labels == 3 and a.correspondences() == {0: {0: 0, 1: 1, 2: 2}, 1: {0: 0, 1: 1, 2: 2}}
    b = id_based_match([2, 4])
    assert b.num_global_labels == 4 and b.correspondences()[0] == {0: 0, 1: 1}
    c = id_based_match([5])
    assert c.correspondences() == {0: {t: t for t in range(5)}}


def test_hungarian_trivial_cases():
    rows, cols, total = hungarian_solve([[4.5]])
    assert rows.tolist() == [0] and cols.tolist() == [0] and total == 4.5
    C = 1 - np.eye(4)
    rows, cols, total = hungarian_solve(C)
    assert cols.tolist() == [0, 1, 2, 3] and total == 0.0


def test_hungarian_rejects_bad_input():
    with pytest.raises(ValueError):
        hungarian_solve(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        hungarian_solve([[1.0, np.inf]])


def test_hungarian_3x3_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(50):
        C = rng.random((3, 3))
        assert hungarian_solve(C)[2] == brute_force_min(C)


def test_hungarian_7x7_brute_force():
    rng = np.random.default_rng(77)
    for _ in range(100):
        C = rng.random((7, 7))
        assert hungarian_solve(C)[2] == brute_force_min(C)


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hungarian_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 16)), int(rng.integers(1, 16))
    C = rng.integers(0, 20, (n, m)).astype(float) if rng.random() < 0.5 else rng.normal(size=(n, m))
    rows, cols, total = hungarian_solve(C)
    r2, c2 = linear_sum_assignment(C)
    assert len(rows) == min(n, m)
    assert len(set(rows.tolist())) == len(rows) and len(set(cols.tolist())) == len(cols)
    assert total == pytest.approx(C[r2, c2].sum(), abs=1e-9)
    # spot-check against random permutations as well
    for _ in range(5):
        if n <= m:
            p = rng.permutation(m)[:n]
            assert total <= C[np.arange(n), p].sum() + 1e-9
        else:
            p = rng.permutation(n)[:m]
            assert total <= C[p, np.arange(m)].sum() + 1e-9


def test_sequential_identical_descriptors_identity():
    rng = np.random.default_rng(4)
    d = rng.dirichlet(np.ones(10), size=4)
    for cost in ("l1", "l2", "cosine"):
        a = hungarian_sequential_match([d, d], cost)
        assert a.correspondences()[0] == a.correspondences()[1]
        assert a.num_global_labels == 4


def test_sequential_surplus_topics_get_new_labels():
    rng = np.random.default_rng(6)
    d = rng.dirichlet(np.ones(10), size=5)
    a = hungarian_sequential_match([d[:2], d], "l2")
    assert a.num_global_labels == 5
    a.validate()


def test_sequential_seeds_from_first_robot():
    # robot 2 matches robot 0 only, never robot 1
    d0 = np.array([[1.0, 0.0, 0.0]])
    d1 = np.array([[0.0, 1.0, 0.0]])
    d2 = np.array([[0.0, 0.9, 0.1]])
    a = hungarian_sequential_match([d0, d1, d2], "l2")
    c = a.correspondences()
    assert c[1][0] == c[0][0] == c[2][0]


def test_unknown_algorithm_and_cost():
    with pytest.raises(ValueError):
        match("nope", [np.eye(2)])
    with pytest.raises(ValueError):
        hungarian_sequential_match([np.eye(2)], "kl")


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(
    [("clear", "cosine"), ("clear", "to"), ("hungarian", "l1"), ("hungarian", "l2"),
     ("hungarian", "cosine"), ("id", None)]))
def test_assignment_invariants(seed, method):
    rng = np.random.default_rng(seed)
    V = int(rng.integers(2, 12))
    n_robots = int(rng.integers(1, 5))
    sets = [rng.dirichlet(np.full(V, 0.3), size=int(rng.integers(1, 5))) for _ in range(n_robots)]
    ids = rng.permutation(10)[:n_robots].tolist()
    a = match(method[0], sets, method[1], 0.75, ids)
    a.validate()
    corr = a.correspondences()
    # completeness
    assert sorted(corr) == sorted(ids)
    for r, d in zip(ids, sets):
        assert sorted(corr[r]) == list(range(len(d)))
        # injectivity per robot
        assert len(set(corr[r].values())) == len(d)
    # cluster-graph structure: labels are 0..G-1, all used
    assert sorted(set(a.labels.tolist())) == list(range(a.num_global_labels))


def test_assignment_json_round_trip():
    a = match("clear", [np.eye(3), np.eye(3)[::-1]], "to")
    b = ClusterAssignment.from_json(a.to_json())
    assert b.correspondences() == a.correspondences()
    doc = json.loads(a.to_json())
    assert set(doc) >= {"num_global_labels", "assignments", "algorithm", "metric", "sigma"}


def test_pairwise_f1():
    a = ClusterAssignment([(0, 0), (0, 1), (1, 0), (1, 1)], [0, 1, 0, 1], 2, "clear")
    assert pairwise_f1(a, [0, 1, 0, 1]) == 1.0
    assert pairwise_f1(a, [0, 1, 1, 0]) == 0.0


def test_similarity_based_sequential_matches_planted_noise_free():
    rng = np.random.default_rng(9)
    for _ in range(20):
        g, truth = planted_instance(rng, 3, 4, presence=1.0)
        assert same_partition(hungarian_sequential_from_similarity(g).labels, truth)
