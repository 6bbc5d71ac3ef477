"""
Deterministic downstream regressors: closed-form ridge and exact k-NN.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg
from scipy.spatial.distance import cdist

from dsboot.errors import ConfigError, DataError, ShapeError, SingularSystemError

_QUERY_CHUNK = 1024


class RegressorKind(str, Enum):
    RIDGE = "ridge"
    KNN = "knn"


class RegressorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: RegressorKind
    ridge_lambda: float = Field(default=1e-2, ge=0)
    knn_k: int = Field(default=5, ge=1)
    name: Optional[str] = None

    @property
    def label(self) -> str:
        return self.name or self.kind.value


def _matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def _vector(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.shape != (n,):
        raise ShapeError(f"{name} has {arr.size} entries, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class RidgeModel:
    coef: np.ndarray
    intercept: float

    def predict(self, X) -> np.ndarray:
        return _matrix(X, "X") @ self.coef + self.intercept


def ridge_fit(X, y, ridge_lambda: float) -> RidgeModel:
    """
    Minimize ||X w + b - y||^2 + lambda ||w||^2 with an unpenalized
    intercept, by solving the normal equations of the centered problem.
    """
    X = _matrix(X, "X")
    n, d = X.shape
    if n < 1:
        raise DataError("Ridge regression needs at least one row")
    y = _vector(y, n, "y")
    if ridge_lambda < 0:
        raise ConfigError(f"ridge_lambda must be nonnegative, got {ridge_lambda}")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    if d == 0:
        return RidgeModel(coef=np.zeros(0), intercept=y_mean)
    Xc = X - x_mean
    gram = Xc.T @ Xc + ridge_lambda * np.eye(d)
    if ridge_lambda == 0 and np.linalg.matrix_rank(Xc) < d:
        raise SingularSystemError("Singular system with ridge_lambda=0; use ridge_lambda > 0")
    try:
        coef = linalg.solve(gram, Xc.T @ (y - y_mean), assume_a="pos")
    except linalg.LinAlgError as e:
        raise SingularSystemError(f"Ridge system could not be solved ({e}); use ridge_lambda > 0") from e
    return RidgeModel(coef=coef, intercept=y_mean - float(x_mean @ coef))


def knn_predict(train_X, train_y, query, k: int) -> np.ndarray:
    """
    Mean target of the k nearest training rows (Euclidean), per query row.

    Equal distances are resolved in favour of the lower training index.
    """
    train_X = _matrix(train_X, "train_X")
    n = train_X.shape[0]
    if n == 0:
        raise DataError("k-NN needs a non-empty training set")
    train_y = _vector(train_y, n, "train_y")
    if not 1 <= k <= n:
        raise ConfigError(f"knn_k must be within [1, {n}], got {k}")
    query = _matrix(query, "query")
    if query.shape[1] != train_X.shape[1]:
        raise ShapeError(f"Query has {query.shape[1]} features, training set has {train_X.shape[1]}")

    out = np.empty(query.shape[0], dtype=np.float64)
    for start in range(0, query.shape[0], _QUERY_CHUNK):
        dist = cdist(query[start:start + _QUERY_CHUNK], train_X, "sqeuclidean")
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        out[start:start + _QUERY_CHUNK] = train_y[nearest].mean(axis=1)
    return out


class RidgeRegressor:

    def __init__(self, ridge_lambda: float):
        self.ridge_lambda = ridge_lambda
        self._model: Optional[RidgeModel] = None

    def fit(self, X, y) -> "RidgeRegressor":
        self._model = ridge_fit(X, y, self.ridge_lambda)
        return self

    def predict(self, X) -> np.ndarray:
        if self._model is None:
            raise ConfigError("Regressor used before fit")
        return self._model.predict(X)


class KnnRegressor:

    def __init__(self, k: int):
        self.k = k
        self._X: Optional[np.ndarray] = None
        self._y: Optional[np.ndarray] = None

    def fit(self, X, y) -> "KnnRegressor":
        self._X = _matrix(X, "X")
        self._y = _vector(y, self._X.shape[0], "y")
        if not 1 <= self.k <= self._X.shape[0]:
            raise ConfigError(f"knn_k must be within [1, {self._X.shape[0]}], got {self.k}")
        return self

    def predict(self, X) -> np.ndarray:
        if self._X is None:
            raise ConfigError("Regressor used before fit")
        return knn_predict(self._X, self._y, X, self.k)


Regressor = Union[RidgeRegressor, KnnRegressor]


def make_regressor(spec: RegressorSpec) -> Regressor:
    if spec.kind == RegressorKind.RIDGE:
        return RidgeRegressor(spec.ridge_lambda)
    return KnnRegressor(spec.knn_k)
