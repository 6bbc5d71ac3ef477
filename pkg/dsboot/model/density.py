"""
Target density estimation, relevance weights and plug-in bandwidths.

All kernels are Gaussian. The target KDE bandwidth follows Silverman's
rule of thumb unless an explicit bandwidth is configured; latent-space
bandwidths use Scott's per-dimension rule on the encoder means.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from dsboot.errors import BandwidthError, ConfigError, DataError, ShapeError

logger = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_CHUNK = 2048
BANDWIDTH_FLOOR = 1e-8


class BandwidthRule(str, Enum):
    SILVERMAN = "silverman"


@dataclass(frozen=True)
class KdeConfig:
    bandwidth: Optional[float] = None
    rule: BandwidthRule = BandwidthRule.SILVERMAN

    def __post_init__(self):
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError(f"KDE bandwidth must be positive, got {self.bandwidth}")

    def resolve(self, y: np.ndarray) -> float:
        if self.bandwidth is not None:
            return float(self.bandwidth)
        return silverman_bandwidth_1d(y)


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def kde_eval(y, h: float, points) -> np.ndarray:
    """
    Gaussian KDE f(t) = 1/(n h) * sum_i K((t - y_i) / h) at each point.
    """
    y = _as_vector(y, "y")
    points = _as_vector(points, "points")
    if y.size == 0:
        raise DataError("Cannot estimate a density from an empty sample")
    if not (math.isfinite(h) and h > 0):
        raise BandwidthError(f"Bandwidth must be positive and finite, got {h}")

    out = np.empty(points.size, dtype=np.float64)
    scale = _INV_SQRT_2PI / (y.size * h)
    for start in range(0, points.size, _CHUNK):
        u = (points[start:start + _CHUNK, None] - y[None, :]) / h
        out[start:start + _CHUNK] = np.exp(-0.5 * u * u).sum(axis=1) * scale
    return out


def silverman_bandwidth_1d(y) -> float:
    """
    h = 0.9 * min(sd, IQR / 1.34) * n^(-1/5), sd with ddof=1.

    When the IQR vanishes but the sample is not constant the standard
    deviation alone is used.
    """
    y = _as_vector(y, "y")
    n = y.size
    if n < 2:
        raise BandwidthError("Silverman's rule needs at least two observations")
    if np.ptp(y) == 0:
        raise BandwidthError(
            "All target values are identical; supply an explicit KDE bandwidth"
        )
    sd = float(np.std(y, ddof=1))
    q75, q25 = np.percentile(y, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if not spread > 0:
        spread = sd
    return 0.9 * spread * n ** (-0.2)


@dataclass(frozen=True)
class RelevanceWeights:
    raw: np.ndarray
    normalized: np.ndarray
    alpha: float
    bandwidth: float

    def __post_init__(self):
        for name in ("raw", "normalized"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.raw.size

    @classmethod
    def uniform(cls, n: int) -> "RelevanceWeights":
        return cls(raw=np.ones(n), normalized=np.full(n, 1.0 / n), alpha=0.0, bandwidth=float("nan"))


def relevance_weights(y, alpha: float, kde: Optional[KdeConfig] = None) -> RelevanceWeights:
    """
    Drawing weights w_i = 1 / f(y_i)^alpha and their normalized form.

    The raw weights scale the per-sample target loss; the normalized vector
    is the seed-selection distribution.
    """
    if not alpha >= 0:
        raise ConfigError(f"alpha must be nonnegative, got {alpha}")
    kde = kde or KdeConfig()
    y = _as_vector(y, "y")
    h = kde.resolve(y)
    density = kde_eval(y, h, y)
    raw = np.exp(-alpha * np.log(density))
    return RelevanceWeights(raw=raw, normalized=raw / raw.sum(), alpha=float(alpha), bandwidth=h)


def weights_at(y_train, weights: RelevanceWeights, points) -> np.ndarray:
    """Raw relevance of new target values under the training density."""
    density = np.maximum(kde_eval(y_train, weights.bandwidth, points), np.finfo(np.float64).tiny)
    return np.exp(-weights.alpha * np.log(density))


@dataclass(frozen=True)
class BandwidthSpec:
    per_dim: np.ndarray
    hmult: float = 1.0
    floored: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        per_dim = np.array(self.per_dim, dtype=np.float64).reshape(-1)
        if per_dim.size == 0 or not np.all(per_dim > 0):
            raise BandwidthError("All per-dimension bandwidths must be positive")
        if not self.hmult > 0:
            raise ConfigError(f"hmult must be positive, got {self.hmult}")
        per_dim.setflags(write=False)
        object.__setattr__(self, "per_dim", per_dim)
        object.__setattr__(self, "floored", tuple(self.floored))

    @property
    def q(self) -> int:
        return self.per_dim.size

    @property
    def effective(self) -> np.ndarray:
        return self.hmult * self.per_dim


def scott_bandwidth(mu, hmult: float = 1.0) -> BandwidthSpec:
    """
    Diagonal Scott rule h_j = sd_j * n^(-1/(q+4)), sd_j with ddof=1.

    Constant dimensions get a floor bandwidth and are listed in ``floored``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 2:
        raise ShapeError(f"Expected an n x q matrix, got shape {mu.shape}")
    n, q = mu.shape
    if n < 2:
        raise BandwidthError("Scott's rule needs at least two rows")
    sd = np.std(mu, axis=0, ddof=1)
    h = sd * n ** (-1.0 / (q + 4))
    floored = tuple(int(j) for j in np.flatnonzero(~(h > 0)))
    if floored:
        logger.warning(f"Latent dimensions {list(floored)} are constant; bandwidth floored at {BANDWIDTH_FLOOR}")
        h = np.where(h > 0, h, BANDWIDTH_FLOOR)
    return BandwidthSpec(per_dim=h, hmult=hmult, floored=floored)
