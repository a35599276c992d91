import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import adjusted_mutual_info_score

from oracles import permutation_emi, reference_ami, vinh_emi
from topicfuse.fusion import GlobalSemanticMap
from topicfuse.metrics import (
    ContingencyTable,
    ami,
    ami_score,
    contingency,
    entropy,
    expected_mi,
    mutual_information,
    table_from_labels,
)
from topicfuse.world import GridSpec, GroundTruthMap


def fused_from(labels, grid, cells=None):
    cells = np.arange(grid.num_cells) if cells is None else np.asarray(cells)
    z = np.zeros(len(cells), dtype=np.int64)
    labels = np.asarray(labels)
    return GlobalSemanticMap(cells, labels, z, z, int(labels.max()) + 1, grid)


def test_contingency_identity_is_diagonal():
    g = GridSpec(4, 4)
    truth = GroundTruthMap(g, np.arange(16) % 3, 3)
    t = contingency(truth, fused_from(truth.labels, g))
    assert np.array_equal(t.counts, np.diag(np.bincount(truth.labels)))


def test_contingency_constant_fused_is_one_column():
    g = GridSpec(4, 4)
    truth = GroundTruthMap(g, np.arange(16) % 3, 3)
    t = contingency(truth, fused_from(np.zeros(16, int), g))
    assert t.counts.shape == (3, 1)


def test_contingency_four_cell_toy():
    g = GridSpec(2, 2)
    truth = GroundTruthMap(g, [0, 0, 1, 1], 2)
    t = contingency(truth, fused_from([0, 1, 0, 1], g))
    assert t.counts.tolist() == [[1, 1], [1, 1]]
    assert t.total == 4 and t.row_marginals.tolist() == [2, 2]


def test_contingency_skips_unobserved_cells():
    g = GridSpec(3, 1)
    truth = GroundTruthMap(g, [0, 1, 2], 3)
    t = contingency(truth, fused_from([5, 5], g, cells=[0, 2]))
    assert t.total == 2 and t.counts.shape == (2, 1)


def test_contingency_grid_mismatch():
    truth = GroundTruthMap(GridSpec(2, 2), [0, 0, 1, 1], 2)
    with pytest.raises(ValueError):
        contingency(truth, fused_from([0] * 6, GridSpec(3, 2)))


def test_mi_identical_binary_is_ln2():
    t = table_from_labels([0, 0, 1, 1], [1, 1, 0, 0])
    assert mutual_information(t) == pytest.approx(math.log(2), abs=1e-12)


def test_mi_independent_product_is_zero():
    t = ContingencyTable(np.outer([1, 2], [3, 1, 2]), np.arange(2), np.arange(3))
    assert mutual_information(t) == pytest.approx(0.0, abs=1e-12)


def test_mi_rejects_empty_table():
    with pytest.raises(ValueError):
        mutual_information(ContingencyTable(np.zeros((1, 1)), np.arange(1), np.arange(1)))


def test_expected_mi_single_cluster():
    assert expected_mi([7], [3, 4]) == 0.0
    assert expected_mi([2, 5], [7]) == 0.0


@pytest.mark.parametrize("rows,cols", [((2, 2), (2, 2)), ((3, 1), (2, 2))])
def test_expected_mi_permutation_oracle(rows, cols):
    mean, se = permutation_emi(rows, cols, 100_000, seed=1)
    # (3,1)/(2,2) has a single attainable table up to relabeling, so se can be 0
    assert abs(expected_mi(rows, cols) - mean) <= max(3 * se, 1e-12)


def test_expected_mi_matches_second_implementation():
    rng = np.random.default_rng(8)
    for _ in range(20):
        a = rng.integers(1, 8, int(rng.integers(1, 5)))
        N = int(a.sum())
        cuts = np.sort(rng.choice(np.arange(1, N), size=min(int(rng.integers(0, 4)), N - 1), replace=False))
        b = np.diff(np.r_[0, cuts, N])
        assert expected_mi(a, b) == pytest.approx(vinh_emi(a.tolist(), b.tolist()), abs=1e-12)


def test_expected_mi_rejects_mismatched_totals():
    with pytest.raises(ValueError):
        expected_mi([1, 2], [4])


def test_ami_permuted_labels_is_one():
    truth = np.arange(30) % 4
    assert ami_score(truth, (truth + 2) % 4 * 7) == 1.0


def test_ami_both_constant_is_one():
    assert ami_score([3, 3, 3], [0, 0, 0]) == 1.0


def test_ami_random_labeling_near_zero():
    rng = np.random.default_rng(12)
    truth = rng.integers(0, 8, 10_000)
    assert abs(ami_score(truth, rng.integers(0, 8, 10_000))) < 0.01


def test_ami_pinned_against_reference_formula():
    rng = np.random.default_rng(21)
    for _ in range(20):
        counts = rng.integers(0, 6, (int(rng.integers(2, 5)), int(rng.integers(2, 5))))
        counts[0, 0] += 1
        t = ContingencyTable(counts, np.arange(counts.shape[0]), np.arange(counts.shape[1]))
        nz = counts[counts.sum(1) > 0][:, counts.sum(0) > 0]
        if (nz > 0).sum(0).max() == 1 and (nz > 0).sum(1).max() == 1:
            continue
        assert ami(t) == pytest.approx(reference_ami(nz), abs=1e-10)


def test_ami_agrees_with_sklearn():
    rng = np.random.default_rng(31)
    for _ in range(30):
        n = int(rng.integers(5, 200))
        a, b = rng.integers(0, 5, n), rng.integers(0, 6, n)
        b[: n // 2] = a[: n // 2]
        ours = ami_score(a, b)
        ref = adjusted_mutual_info_score(a, b, average_method="max")
        assert ours == pytest.approx(ref, abs=1e-9)


def test_entropy_of_uniform():
    assert entropy([5, 5, 5, 5]) == pytest.approx(math.log(4))
    assert entropy([]) == 0.0


labelings = st.integers(2, 60).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 5), min_size=n, max_size=n),
                        st.lists(st.integers(0, 5), min_size=n, max_size=n)))


@settings(max_examples=1000, deadline=None)
@given(labelings, st.permutations(range(6)), st.permutations(range(6)))
def test_ami_invariants(pair, p, q):
    a, b = np.asarray(pair[0]), np.asarray(pair[1])
    s = ami_score(a, b)
    assert s <= 1.0 + 1e-12
    assert s == pytest.approx(ami_score(b, a), abs=1e-10)
    p, q = np.asarray(p), np.asarray(q)
    assert s == pytest.approx(ami_score(p[a], q[b]), abs=1e-10)
    t = table_from_labels(a, b)
    same = len(set(zip(a.tolist(), b.tolist()))) == len(set(a.tolist())) == len(set(b.tolist()))
    assert (s == 1.0) == same or (not same and s < 1.0 - 1e-12)
    mi = mutual_information(t)
    assert mi >= 0.0
    assert mi <= min(entropy(t.row_marginals), entropy(t.col_marginals)) + 1e-12


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_contingency_marginals_consistent(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 50))
    t = table_from_labels(rng.integers(0, 4, n), rng.integers(0, 4, n))
    assert t.total == n
    assert np.array_equal(t.row_marginals, t.counts.sum(1))
    assert (t.row_marginals > 0).all() and (t.col_marginals > 0).all()
    assert np.array_equal(t.T.counts, t.counts.T)
