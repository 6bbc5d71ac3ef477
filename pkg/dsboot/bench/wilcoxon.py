"""
Two-sided Wilcoxon signed-rank test for paired per-fold metrics.

Zero differences are dropped and tied absolute differences share their
average rank. Up to ``EXACT_LIMIT`` nonzero pairs the p-value is exact: the
null distribution of W+ is counted over all 2^k sign assignments using the
doubled (integer) ranks. Beyond that a normal approximation with tie
correction is used.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from dsboot.errors import DataError, ShapeError

EXACT_LIMIT = 20


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    method: str
    n_nonzero: int

    @property
    def degenerate(self) -> bool:
        return self.method == "degenerate"


def _exact_lower_tail(doubled_ranks: np.ndarray, t2: int) -> float:
    """P(2 * W+ <= t2) under the null, for integer doubled ranks."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return float(counts[:t2 + 1].sum()) / float(2 ** doubled_ranks.size)


def wilcoxon_signed_rank(a, b, exact_limit: int = EXACT_LIMIT) -> WilcoxonResult:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"Paired samples differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise DataError("Wilcoxon test needs at least one pair")

    diff = a - b
    if not np.all(np.isfinite(diff)):
        raise DataError("Paired samples must be finite")
    diff = diff[diff != 0]
    k = diff.size
    if k == 0:
        return WilcoxonResult(statistic=0.0, p_value=1.0, method="degenerate", n_nonzero=0)

    ranks = stats.rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())
    statistic = min(w_plus, w_minus)

    if k <= exact_limit:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = 2.0 * _exact_lower_tail(doubled, int(round(2 * statistic)))
        return WilcoxonResult(statistic, min(1.0, p), "exact", k)

    _, tie_sizes = np.unique(np.abs(diff), return_counts=True)
    mean = k * (k + 1) / 4.0
    var = k * (k + 1) * (2 * k + 1) / 24.0 - float((tie_sizes ** 3 - tie_sizes).sum()) / 48.0
    z = (statistic - mean) / math.sqrt(var)
    p = 2.0 * float(stats.norm.cdf(z))
    return WilcoxonResult(statistic, min(1.0, p), "normal", k)
