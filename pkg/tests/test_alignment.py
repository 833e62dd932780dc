import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simalign.alignment import (
    DesignMatrix,
    PairList,
    RidgeConfig,
    RidgePath,
    build_design_matrix,
    enumerate_pairs,
    fit_ridge,
    kkt_residual,
    objective_and_gradient,
    ridge_closed_form,
    ridge_iterative,
    ridge_nonneg,
)
from simalign.data import FeatureMatrix, SimilarityMatrix
from simalign.exceptions import (
    ConvergenceError,
    DimensionError,
    EmptyDesignError,
    SingularSystemError,
    ValidationError,
)


def fm(values):
    values = np.asarray(values, dtype=float)
    return FeatureMatrix(values, [f"i{k}" for k in range(values.shape[0])])


def random_design(seed, n_rows=None, n_cols=None):
    r = np.random.default_rng(seed)
    n = n_rows or int(r.integers(5, 60))
    d = n_cols or int(r.integers(1, 25))
    return DesignMatrix(r.normal(size=(n, d)), r.normal(size=n)), r


def test_enumerate_pairs_examples():
    assert enumerate_pairs(3).tolist() == [(1, 0), (2, 0), (2, 1)]
    assert enumerate_pairs(2).tolist() == [(1, 0)]
    assert len(enumerate_pairs(120)) == 7140
    with pytest.raises(ValidationError):
        enumerate_pairs(1)


@given(st.integers(2, 40))
def test_enumerate_pairs_properties(n):
    p = enumerate_pairs(n)
    pairs = p.tolist()
    assert len(pairs) == n * (n - 1) // 2 == len(set(pairs))
    assert all(i > j for i, j in pairs)
    assert pairs == sorted(pairs)


def test_pair_list_rejects_bad_pairs():
    with pytest.raises(ValidationError):
        PairList([0], [1])
    with pytest.raises(ValidationError):
        PairList([1, 1], [0, 0])


def test_design_row_example():
    F = fm([[1, 2], [3, 4]])
    S = SimilarityMatrix([[0, 7], [7, 0]], F.item_ids)
    X = build_design_matrix(F, S)
    np.testing.assert_array_equal(X.values, [[3, 8]])
    np.testing.assert_array_equal(X.targets, [7])


def test_design_identical_rows_square():
    F = fm([[1, -2, 3], [1, -2, 3], [0, 1, 1]])
    S = SimilarityMatrix(np.ones((3, 3)), F.item_ids)
    X = build_design_matrix(F, S)
    np.testing.assert_array_equal(X.values[0], [1, 4, 9])


def test_design_mask_and_missing():
    F = fm(np.eye(3))
    S = SimilarityMatrix([[np.nan, 1, np.nan], [1, np.nan, 2], [np.nan, 2, np.nan]], F.item_ids)
    with pytest.raises(ValidationError, match="mask"):
        build_design_matrix(F, S)
    X = build_design_matrix(F, S, mask=np.isfinite(S.values))
    assert X.n_rows == 2
    with pytest.raises(EmptyDesignError):
        build_design_matrix(F, S, mask=np.zeros((3, 3), bool))


@given(st.integers(2, 15), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_design_rows_are_hadamard_products(n, d, seed):
    r = np.random.default_rng(seed)
    F = fm(r.normal(size=(n, d)))
    A = r.normal(size=(n, n))
    S = SimilarityMatrix(A + A.T, F.item_ids)
    X = build_design_matrix(F, S)
    for row, (i, j) in enumerate(X.pairs):
        np.testing.assert_array_equal(X.values[row], F.values[i] * F.values[j])
        assert X.targets[row] == S.values[i, j]
    # the streamed representation agrees with the dense one
    Xs = build_design_matrix(F, S, memory_budget=0)
    assert not Xs.is_dense
    w = r.normal(size=d)
    np.testing.assert_allclose(Xs.matvec(w), X.matvec(w), atol=1e-12)
    np.testing.assert_allclose(Xs.gram(), X.gram(), atol=1e-10)


def test_closed_form_examples():
    X = DesignMatrix(np.eye(2), [2.0, 3.0])
    np.testing.assert_allclose(ridge_closed_form(X, 0).values, [2, 3])
    np.testing.assert_allclose(ridge_closed_form(X, 1).values, [1, 1.5])
    Xr, _ = random_design(1)
    assert np.linalg.norm(ridge_closed_form(Xr, 1e12).values) < 1e-6


def test_closed_form_singular_at_zero_lambda():
    X = DesignMatrix([[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0])
    with pytest.raises(SingularSystemError, match="lambda > 0"):
        ridge_closed_form(X, 0.0)
    assert np.all(np.isfinite(ridge_closed_form(X, 0.1).values))


def test_closed_form_feature_cap():
    X = DesignMatrix(np.ones((3, 5)), np.ones(3))
    with pytest.raises(ValidationError, match="ridge_iterative"):
        ridge_closed_form(X, 1.0, max_features=4)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 100.0))
def test_closed_form_is_stationary(seed, lam):
    X, _ = random_design(seed)
    try:
        w = ridge_closed_form(X, lam)
    except SingularSystemError:
        assert np.linalg.matrix_rank(X.values) < X.n_cols or lam < 1e-10
        return
    _, g = objective_and_gradient(X, w, lam)
    scale = max(1.0, np.linalg.norm(X.xty()))
    assert np.linalg.norm(g) <= 1e-8 * scale


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 50.0), st.sampled_from(["cg", "gd"]))
def test_iterative_matches_closed_form(seed, lam, method):
    X, _ = random_design(seed, n_cols=np.random.default_rng(seed).integers(1, 12))
    cfg = RidgeConfig(lam=lam, tol=1e-9, max_iter=20000, method=method)
    res = ridge_iterative(X, cfg)
    ref, _ = objective_and_gradient(X, ridge_closed_form(X, lam), lam)
    assert abs(res.objective - ref) <= 1e-6 * max(abs(ref), 1e-12)
    assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(res.history, res.history[1:]))


def test_iterative_zero_target():
    X = DesignMatrix(np.random.default_rng(0).normal(size=(10, 3)), np.zeros(10))
    res = ridge_iterative(X, RidgeConfig(lam=1.0))
    assert np.linalg.norm(res.weights.values) <= 1e-6


def test_iterative_nonconvergence_reports_gradient():
    X, _ = random_design(3, n_rows=40, n_cols=20)
    with pytest.raises(ConvergenceError) as info:
        ridge_iterative(X, RidgeConfig(lam=0.0, tol=1e-14, max_iter=2, method="gd"))
    assert info.value.residual > 0
    assert info.value.n_iter == 2


def test_nonneg_examples():
    X = DesignMatrix(np.eye(2), [-1.0, 2.0])
    res = ridge_nonneg(X, RidgeConfig(lam=0.0, tol=1e-10, nonnegative=True))
    np.testing.assert_allclose(res.weights.values, [0, 2], atol=1e-10)
    assert res.weights.nonnegative
    r = np.random.default_rng(5)
    X = DesignMatrix(np.abs(r.normal(size=(20, 4))), -np.abs(r.normal(size=20)))
    res = ridge_nonneg(X, RidgeConfig(lam=0.5, nonnegative=True))
    np.testing.assert_array_equal(res.weights.values, 0)


def test_nonneg_matches_unconstrained_when_feasible():
    r = np.random.default_rng(7)
    A = r.normal(size=(50, 5))
    w_true = np.array([1.0, 2.0, 0.5, 1.5, 3.0])
    X = DesignMatrix(A, A @ w_true + 0.01 * r.normal(size=50))
    ref = ridge_closed_form(X, 0.1).values
    assert np.all(ref > 0)
    res = ridge_nonneg(X, RidgeConfig(lam=0.1, tol=1e-10, nonnegative=True))
    np.testing.assert_allclose(res.weights.values, ref, rtol=1e-6)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 10.0))
def test_nonneg_kkt(seed, lam):
    X, _ = random_design(seed, n_cols=np.random.default_rng(seed).integers(1, 15))
    lam = max(lam, 1e-3)
    res = ridge_nonneg(X, RidgeConfig(lam=lam, tol=1e-7, nonnegative=True, max_iter=20000))
    w = res.weights.values
    assert np.all(w >= 0)
    _, g = objective_and_gradient(X, w, lam)
    assert kkt_residual(w, g) <= 1e-7
    assert np.all(np.abs(g[w > 0]) <= 1e-7)
    assert np.all(g[w == 0] >= -1e-7)


def test_objective_examples():
    X, _ = random_design(11)
    obj, _ = objective_and_gradient(X, np.zeros(X.n_cols), 3.0)
    assert obj == pytest.approx(float(X.targets @ X.targets))
    with pytest.raises(DimensionError):
        objective_and_gradient(X, np.zeros(X.n_cols + 1), 1.0)


def central_difference(X, w, lam, h=1e-6):
    g = np.empty_like(w)
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = h
        g[k] = (objective_and_gradient(X, w + e, lam)[0] - objective_and_gradient(X, w - e, lam)[0]) / (2 * h)
    return g


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 10.0))
def test_gradient_finite_differences(seed, lam):
    X, r = random_design(seed, n_cols=np.random.default_rng(seed).integers(1, 10))
    w = r.normal(size=X.n_cols)
    _, g = objective_and_gradient(X, w, lam)
    fd = central_difference(X, w, lam)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1.0)


@given(st.integers(0, 2**32 - 1))
def test_weight_norm_shrinks_with_lambda(seed):
    X, _ = random_design(seed)
    path = RidgePath.from_design(X)
    norms = [np.linalg.norm(path.solve(lam)) for lam in (0.01, 0.1, 1, 10, 100, 1000)]
    assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))


def test_zero_lambda_residual_equals_least_squares():
    X, _ = random_design(2, n_rows=40, n_cols=6)
    w = ridge_closed_form(X, 0.0).values
    ls, *_ = np.linalg.lstsq(X.values, X.targets, rcond=None)
    np.testing.assert_allclose(w, ls, rtol=1e-9, atol=1e-12)
    lam_res = np.linalg.norm(X.matvec(ridge_closed_form(X, 5.0).values) - X.targets)
    assert lam_res >= np.linalg.norm(X.matvec(w) - X.targets) - 1e-12


def test_fit_ridge_solvers_agree():
    X, _ = random_design(9, n_rows=50, n_cols=8)
    a = fit_ridge(X, 2.0)
    b = fit_ridge(X, 2.0, solver="iterative", cfg=RidgeConfig(tol=1e-10))
    assert b.objective == pytest.approx(a.objective, rel=1e-8)
    assert a.report()["solver"] == "closed"
    with pytest.raises(ValidationError):
        fit_ridge(X, 1.0, solver="sag")


def test_fit_intercept_flag():
    r = np.random.default_rng(4)
    A = r.normal(size=(60, 3))
    X = DesignMatrix(A, A @ [1.0, -1.0, 2.0] + 5.0)
    fit = fit_ridge(X, 1e-8, fit_intercept=True)
    assert fit.offset == pytest.approx(5.0, abs=1e-6)
    np.testing.assert_allclose(fit.predict(X), X.targets, atol=1e-6)
    assert fit_ridge(X, 1e-8).offset == 0.0
