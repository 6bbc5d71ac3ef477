"""
Seeded generator of imbalanced-regression toy tables.

The target is a two-component Gaussian mixture: a N(0, 1) bulk and a rare
N(3, 1) upper tail with mixing weight ``tail_fraction``. Features are noisy
functions of the target; categorical features are tertile bins of a noisy
driver.
"""

import logging
from enum import Enum

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dsboot.data.tabular import ColumnKind, ColumnSpec, Dataset
from dsboot.runtime.hashing import rng_for

logger = logging.getLogger(__name__)

TAIL_SHIFT = 3.0
LEVELS = ("low", "mid", "high")


class Nonlinearity(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    INTERACTION = "interaction"


class SynthSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(default=1000, ge=10)
    p_numeric: int = Field(default=3, ge=0)
    p_integer: int = Field(default=0, ge=0)
    p_categorical: int = Field(default=2, ge=0)
    tail_fraction: float = Field(default=0.05, gt=0, lt=0.5)
    noise_sd: float = Field(default=0.5, gt=0)
    nonlinearity: Nonlinearity = Nonlinearity.LINEAR
    rng_seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _has_features(self):
        if self.p == 0:
            raise ValueError("at least one feature is required")
        return self

    @property
    def p(self) -> int:
        return self.p_numeric + self.p_integer + self.p_categorical


def _signal(y: np.ndarray, loading: float, nonlinearity: Nonlinearity, rng: np.random.Generator) -> np.ndarray:
    if nonlinearity == Nonlinearity.QUADRATIC:
        return loading * (y + 0.25 * y ** 2)
    if nonlinearity == Nonlinearity.INTERACTION:
        return loading * y * (1.0 + 0.5 * rng.standard_normal(y.size))
    return loading * y


def make_imbalanced(spec: SynthSpec) -> Dataset:
    rng = rng_for(spec.rng_seed, "synthdata")
    n = spec.n

    tail = rng.random(n) < spec.tail_fraction
    bulk = rng.standard_normal(n)
    shifted = TAIL_SHIFT + rng.standard_normal(n)
    y = np.where(tail, shifted, bulk)

    loadings = rng.uniform(0.5, 1.5, size=spec.p) * rng.choice([-1.0, 1.0], size=spec.p)
    columns = []
    data = {}

    def driver(j: int) -> np.ndarray:
        return _signal(y, loadings[j], spec.nonlinearity, rng) + spec.noise_sd * rng.standard_normal(n)

    j = 0
    for i in range(spec.p_numeric):
        name = f"x{i + 1}"
        columns.append(ColumnSpec(name, ColumnKind.NUMERIC))
        data[name] = driver(j)
        j += 1
    for i in range(spec.p_integer):
        name = f"k{i + 1}"
        columns.append(ColumnSpec(name, ColumnKind.INTEGER))
        data[name] = np.rint(5.0 + 2.0 * driver(j)).astype(np.int64)
        j += 1
    for i in range(spec.p_categorical):
        name = f"c{i + 1}"
        columns.append(ColumnSpec(name, ColumnKind.CATEGORICAL, categories=LEVELS))
        values = driver(j)
        cuts = np.quantile(values, [1.0 / 3.0, 2.0 / 3.0])
        data[name] = np.asarray(LEVELS, dtype=object)[np.digitize(values, cuts)]
        j += 1

    columns.append(ColumnSpec("y", ColumnKind.NUMERIC))
    data["y"] = y
    logger.debug(f"Generated synthetic table: n={n}, p={spec.p}, tail rows={int(tail.sum())}")
    return Dataset(
        columns=tuple(columns),
        frame=pd.DataFrame(data, columns=[c.name for c in columns]),
        target=len(columns) - 1,
    )
