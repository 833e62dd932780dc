import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import pdist, squareform

from simalign.data import FeatureMatrix, SimilarityMatrix
from simalign.exceptions import ValidationError
from simalign.similarity import inner_product_similarity
from simalign.structure import (
    classical_mds,
    hca_centroid,
    monotone_regression,
    nonmetric_mds,
    sim_to_dist,
    stress1,
)


def brute_isotonic(y):
    """Least-squares nondecreasing fit by enumerating contiguous level sets."""
    y = np.asarray(y, dtype=float)
    n = y.size
    best, best_sse = None, np.inf
    for cuts in itertools.product([0, 1], repeat=n - 1):
        bounds = [0] + [k + 1 for k, c in enumerate(cuts) if c] + [n]
        fit = np.empty(n)
        means = []
        for a, b in zip(bounds, bounds[1:]):
            fit[a:b] = y[a:b].mean()
            means.append(fit[a])
        if any(m2 < m1 - 1e-12 for m1, m2 in zip(means, means[1:])):
            continue
        sse = float(((fit - y) ** 2).sum())
        if sse < best_sse - 1e-12:
            best, best_sse = fit, sse
    return best


# -- sim_to_dist ---------------------------------------------------------------


def test_sim_to_dist_examples():
    S = SimilarityMatrix(np.full((3, 3), 2.0), ["a", "b", "c"])
    np.testing.assert_array_equal(sim_to_dist(S), 0.0)
    F = FeatureMatrix(np.eye(2), ["a", "b"])
    D = sim_to_dist(inner_product_similarity(F), "self-sim")
    assert D[0, 1] == pytest.approx(np.sqrt(2))
    empirical = SimilarityMatrix([[np.nan, 1.0], [1.0, np.nan]], ["a", "b"])
    with pytest.raises(ValidationError):
        sim_to_dist(empirical, "self-sim")


@given(st.integers(3, 12), st.integers(0, 2**32 - 1))
def test_max_shift_reverses_rank_order(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    S = SimilarityMatrix(A + A.T, [str(k) for k in range(n)])
    D = sim_to_dist(S)
    i, j = np.tril_indices(n, -1)
    np.testing.assert_array_equal(np.argsort(D[i, j], kind="stable"),
                                  np.argsort(-S.values[i, j], kind="stable"))
    assert np.all(np.diag(D) == 0) and np.array_equal(D, D.T) and D[i, j].min() == 0


# -- classical MDS ----------------------------------------------------------------


def test_classical_mds_collinear():
    x = np.array([0.0, 1.0, 3.0])
    D = np.abs(x[:, None] - x[None, :])
    emb = classical_mds(D, 1)
    np.testing.assert_allclose(squareform(pdist(emb.coords)), D, atol=1e-8)


def test_classical_mds_zero_and_padding():
    with pytest.warns(UserWarning):
        emb = classical_mds(np.zeros((4, 4)), 2)
    np.testing.assert_array_equal(emb.coords, 0.0)
    x = np.array([[0.0], [1.0], [3.0]])
    with pytest.warns(UserWarning, match="padding"):
        emb = classical_mds(squareform(pdist(x)), 2)
    assert emb.coords.shape == (3, 2)


@pytest.mark.filterwarnings("ignore:only .* positive eigenvalue")
@given(st.integers(3, 15), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_classical_mds_reconstructs_euclidean(n, dim, seed):
    r = np.random.default_rng(seed)
    P = r.normal(size=(n, dim))
    D = squareform(pdist(P))
    emb = classical_mds(D, dim)
    np.testing.assert_allclose(squareform(pdist(emb.coords)), D, atol=1e-8)
    np.testing.assert_allclose(emb.coords.mean(axis=0), 0, atol=1e-8)
    Q, _ = np.linalg.qr(r.normal(size=(dim, dim)))
    np.testing.assert_allclose(pdist(emb.coords @ Q), pdist(emb.coords), atol=1e-10)


# -- monotone regression -------------------------------------------------------------


@pytest.mark.parametrize("method", ["scipy", "python"])
def test_monotone_examples(method):
    np.testing.assert_array_equal(monotone_regression([1, 2, 3], [1, 2, 5], method), [1, 2, 5])
    np.testing.assert_allclose(monotone_regression([1, 2, 3], [3, 1, 2], method), [2, 2, 2])


@pytest.mark.parametrize("method", ["scipy", "python"])
@pytest.mark.parametrize("n", range(1, 9))
def test_pava_matches_brute_force_exhaustive(method, n):
    # every sequence over a small alphabet, which covers all orderings and ties
    alphabet = [0.0, 1.0, 2.5] if n <= 6 else [0.0, 2.0]
    for y in itertools.product(alphabet, repeat=n):
        fit = monotone_regression(np.arange(n), np.array(y), method)
        np.testing.assert_allclose(fit, brute_isotonic(y), atol=1e-12)


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=8),
       st.sampled_from(["scipy", "python"]))
def test_pava_matches_brute_force_random(y, method):
    fit = monotone_regression(np.arange(len(y)), np.array(y), method)
    np.testing.assert_allclose(fit, brute_isotonic(y), atol=1e-9)
    assert np.all(np.diff(fit) >= -1e-12)


@given(st.lists(st.integers(0, 3), min_size=2, max_size=12), st.integers(0, 2**32 - 1))
def test_tie_policy_invariant_to_input_order(delta, seed):
    r = np.random.default_rng(seed)
    delta = np.array(delta, dtype=float)
    d = r.normal(size=delta.size)
    base = monotone_regression(delta, d)
    perm = r.permutation(delta.size)
    moved = monotone_regression(delta[perm], d[perm])
    np.testing.assert_allclose(moved, base[perm], atol=1e-12)
    # nondecreasing along increasing dissimilarity, between tie blocks
    for a, b in itertools.combinations(range(delta.size), 2):
        if delta[a] < delta[b]:
            assert base[a] <= base[b] + 1e-12
        elif delta[b] < delta[a]:
            assert base[b] <= base[a] + 1e-12


# -- non-metric MDS ------------------------------------------------------------------


def test_nmds_exact_euclidean():
    P = np.random.default_rng(0).normal(size=(15, 2))
    emb = nonmetric_mds(squareform(pdist(P)), dim=2, seed=0)
    assert emb.stress <= 1e-6
    np.testing.assert_allclose(emb.coords.mean(axis=0), 0, atol=1e-8)
    assert emb.n_restarts_used == 4 and len(emb.restart_stress) == 4


@given(st.integers(5, 14), st.integers(0, 2**32 - 1))
def test_nmds_stress_non_increasing(n, seed):
    r = np.random.default_rng(seed)
    A = r.uniform(size=(n, n))
    D = A + A.T
    np.fill_diagonal(D, 0)
    emb = nonmetric_mds(D, dim=2, max_iter=400, n_init=2, seed=seed)
    h = np.array(emb.history)
    assert np.all(np.diff(h) <= 1e-12)
    assert emb.stress == pytest.approx(h[-1])
    assert 0 <= emb.stress <= 1


def test_nmds_scale_invariant_stress():
    r = np.random.default_rng(3)
    A = r.uniform(size=(10, 10))
    D = A + A.T
    np.fill_diagonal(D, 0)
    a = nonmetric_mds(D, max_iter=300, n_init=1)
    b = nonmetric_mds(2 * D, max_iter=300, n_init=1)
    assert b.stress == pytest.approx(a.stress, rel=1e-6, abs=1e-12)


def test_nmds_doubled_solution_keeps_stress():
    r = np.random.default_rng(4)
    A = r.uniform(size=(9, 9))
    D = A + A.T
    np.fill_diagonal(D, 0)
    emb = nonmetric_mds(D, max_iter=200, n_init=1)
    delta = squareform(D, checks=False)
    d1 = pdist(emb.coords)
    d2 = pdist(2 * emb.coords)
    assert stress1(d2, monotone_regression(delta, d2)) == pytest.approx(
        stress1(d1, monotone_regression(delta, d1)))


def test_nmds_max_iter_flag_and_tolerance_guard():
    r = np.random.default_rng(5)
    A = r.uniform(size=(12, 12))
    D = A + A.T
    np.fill_diagonal(D, 0)
    emb = nonmetric_mds(D, max_iter=3, n_init=1)
    assert not emb.converged and emb.stop_reason == "max_iter"
    emb = nonmetric_mds(D, n_init=1)  # tol=1e-100 must still terminate
    assert emb.stop_reason in {"precision", "tol", "exact"}


def test_nmds_deterministic():
    r = np.random.default_rng(6)
    A = r.uniform(size=(10, 10))
    D = A + A.T
    np.fill_diagonal(D, 0)
    a = nonmetric_mds(D, max_iter=200, seed=11)
    b = nonmetric_mds(D, max_iter=200, seed=11)
    np.testing.assert_array_equal(a.coords, b.coords)


# -- hierarchical clustering ----------------------------------------------------------------


def test_hca_three_points():
    tree = hca_centroid(np.array([0.0, 1.0, 5.0]))
    assert tree.merges[0][:3] == (0, 1, 1.0)
    assert tree.merges[1][2] == 4.5
    assert tree.merges[1][3] == 3


def test_hca_identical_points():
    tree = hca_centroid(np.ones((6, 2)))
    assert np.all(tree.heights == 0)


def test_hca_two_blobs():
    r = np.random.default_rng(0)
    X = np.vstack([r.normal(0, 0.1, (8, 2)), r.normal(10, 0.1, (8, 2))])
    tree = hca_centroid(X)
    assert tree.heights[-1] > tree.heights[:-1].max()
    labels = tree.cut(2)
    assert len(set(labels[:8])) == 1 and len(set(labels[8:])) == 1 and labels[0] != labels[8]


def test_hca_needs_two_items():
    with pytest.raises(ValidationError):
        hca_centroid(np.array([[1.0, 2.0]]))


@given(st.integers(2, 25), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_hca_matches_scipy_centroid(n, d, seed):
    X = np.random.default_rng(seed).normal(size=(n, d))
    tree = hca_centroid(X)
    ref = linkage(X, method="centroid")
    assert len(tree.merges) == n - 1
    np.testing.assert_allclose(tree.linkage_matrix()[:, 2], ref[:, 2], atol=1e-10)
    np.testing.assert_array_equal(tree.linkage_matrix()[:, 3], ref[:, 3])
    for k in (1, max(1, n // 2), n):
        labels = tree.cut(k)
        assert labels.shape == (n,) and len(set(labels.tolist())) == k


def test_hca_from_distances_matches_coordinates():
    X = np.random.default_rng(1).normal(size=(12, 3))
    a = hca_centroid(X)
    b = hca_centroid(squareform(pdist(X)), distances=True)
    np.testing.assert_allclose(a.heights, b.heights, atol=1e-8)


def test_newick_contains_every_leaf_once():
    ids = ["a", "b c", "d", "e"]
    tree = hca_centroid(np.array([0.0, 1.0, 5.0, 5.5]), item_ids=ids)
    text = tree.to_newick()
    assert text.endswith(";")
    for label in ("a", "'b c'", "d", "e"):
        assert text.count(label) == 1
    assert ":-" not in text
    assert tree.members(2 * 4 - 2) == [0, 1, 2, 3]
