import numpy as np
import pytest

from dsboot.bench.regressors import (
    KnnRegressor,
    RegressorKind,
    RegressorSpec,
    RidgeRegressor,
    knn_predict,
    make_regressor,
    ridge_fit,
)
from dsboot.errors import ConfigError, ShapeError, SingularSystemError


def test_ridge_matches_normal_equations():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 4))
    y = X @ np.array([1.0, -2.0, 0.5, 0.0]) + 3.0 + 0.1 * rng.normal(size=40)
    lam = 0.7
    model = ridge_fit(X, y, lam)

    Xc = X - X.mean(axis=0)
    coef = np.linalg.solve(Xc.T @ Xc + lam * np.eye(4), Xc.T @ (y - y.mean()))
    np.testing.assert_allclose(model.coef, coef, rtol=1e-10)
    assert model.intercept == pytest.approx(y.mean() - X.mean(axis=0) @ coef)


def test_ridge_recovers_a_noiseless_line():
    X = np.arange(10, dtype=float).reshape(-1, 1)
    y = 2.0 * X[:, 0] - 1.0
    model = ridge_fit(X, y, 0.0)
    np.testing.assert_allclose(model.predict([[20.0]]), [39.0], rtol=1e-10)


def test_huge_penalty_predicts_the_mean():
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(30, 3)), rng.normal(size=30)
    model = ridge_fit(X, y, 1e12)
    np.testing.assert_allclose(model.predict(X), np.full(30, y.mean()), atol=1e-9)


def test_rank_deficient_without_penalty():
    X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(SingularSystemError):
        ridge_fit(X, np.arange(5.0), 0.0)
    ridge_fit(X, np.arange(5.0), 1e-3)


def test_knn_exact_match_with_k1():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]])
    y = np.array([10.0, 20.0, 30.0])
    np.testing.assert_array_equal(knn_predict(X, y, X, 1), y)


def test_knn_with_k_equal_n_is_the_mean():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(12, 2)), rng.normal(size=12)
    np.testing.assert_allclose(knn_predict(X, y, rng.normal(size=(4, 2)), 12), np.full(4, y.mean()))


def test_knn_matches_sorting_oracle():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(2500, 3)), rng.normal(size=2500)
    query = rng.normal(size=(1100, 3))
    got = knn_predict(X, y, query, 7)
    for i in (0, 517, 1024, 1099):
        dist = ((X - query[i]) ** 2).sum(axis=1)
        assert got[i] == pytest.approx(y[np.argsort(dist, kind="stable")[:7]].mean())


def test_knn_ties_go_to_the_lower_index():
    X = np.array([[1.0], [-1.0], [1.0]])
    y = np.array([5.0, 7.0, 9.0])
    assert knn_predict(X, y, [[0.0]], 1)[0] == 5.0
    assert knn_predict(X, y, [[0.0]], 2)[0] == 6.0


def test_knn_k_out_of_range():
    with pytest.raises(ConfigError):
        KnnRegressor(4).fit(np.zeros((3, 1)), np.zeros(3))


def test_feature_count_mismatch():
    with pytest.raises(ShapeError):
        knn_predict(np.zeros((3, 2)), np.zeros(3), np.zeros((1, 3)), 1)


def test_make_regressor():
    assert isinstance(make_regressor(RegressorSpec(kind="ridge", ridge_lambda=0.5)), RidgeRegressor)
    knn = make_regressor(RegressorSpec(kind=RegressorKind.KNN, knn_k=3))
    assert isinstance(knn, KnnRegressor) and knn.k == 3
    assert RegressorSpec(kind="knn", name="knn10").label == "knn10"
    assert RegressorSpec(kind="ridge").label == "ridge"


def test_predict_before_fit():
    with pytest.raises(ConfigError):
        RidgeRegressor(1.0).predict(np.zeros((1, 1)))
