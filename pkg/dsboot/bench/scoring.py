from typing import Optional

import numpy as np
from pydantic import BaseModel

from dsboot.errors import DataError, ShapeError


class MetricSet(BaseModel):
    """
    Regression metrics in original target units.

    ``r2`` is None when the test target is constant; ``rare_region_rmse`` is
    None when no test row lies above the rare threshold.
    """
    rmse: float
    mae: float
    weighted_mse: float
    r2: Optional[float] = None
    rare_region_rmse: Optional[float] = None
    rare_count: int = 0


def metrics(y_true, y_pred, weights=None, rare_threshold: Optional[float] = None) -> MetricSet:
    y_true = np.asarray(y_true, dtype=np.float64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"Length mismatch: {y_true.size} targets, {y_pred.size} predictions")
    if y_true.size == 0:
        raise DataError("Cannot score an empty prediction")
    if not (np.all(np.isfinite(y_true)) and np.all(np.isfinite(y_pred))):
        raise DataError("Targets and predictions must be finite")

    if weights is None:
        w = np.full(y_true.size, 1.0 / y_true.size)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape != y_true.shape:
            raise ShapeError(f"Length mismatch: {w.size} weights for {y_true.size} rows")
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise DataError("Metric weights must be finite and positive")
        w = w / w.sum()

    err = y_pred - y_true
    sq = err * err
    sse = float(sq.sum())
    sst = float(((y_true - y_true.mean()) ** 2).sum())

    rare_rmse = None
    rare_count = 0
    if rare_threshold is not None:
        rare = y_true > rare_threshold
        rare_count = int(rare.sum())
        if rare_count:
            rare_rmse = float(np.sqrt(sq[rare].mean()))

    return MetricSet(
        rmse=float(np.sqrt(sq.mean())),
        mae=float(np.abs(err).mean()),
        weighted_mse=float((w * sq).sum()),
        r2=1.0 - sse / sst if sst > 0 else None,
        rare_region_rmse=rare_rmse,
        rare_count=rare_count,
    )
