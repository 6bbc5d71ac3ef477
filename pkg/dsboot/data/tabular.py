"""
Dataset ingestion, mixed-type encoding/decoding and K-fold splitting.

A ``Dataset`` holds typed rows (numeric / integer / categorical columns) and
the index of the continuous target. ``fit_encode`` turns it into a fully
numeric ``EncodedMatrix``: numeric and integer columns are z-scored with
population statistics, categorical columns are one-hot expanded and the
target is standardized separately. ``decode`` inverts the mapping.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, model_validator

from dsboot.errors import ConfigError, DataError, SchemaError, ShapeError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    INTEGER = "integer"
    CATEGORICAL = "categorical"


class FeatureRole(str, Enum):
    STANDARDIZED = "standardized-numeric"
    ONE_HOT = "one-hot-level"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: ColumnKind
    categories: Tuple[str, ...] = ()
    mean: Optional[float] = None
    stddev: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ColumnKind(self.kind))
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.kind == ColumnKind.CATEGORICAL:
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"Column '{self.name}' has duplicate categories")
        elif self.categories:
            raise SchemaError(f"Column '{self.name}' is {self.kind.value} but lists categories")
        if self.stddev is not None and not self.stddev >= 0:
            raise SchemaError(f"Column '{self.name}' has negative stddev {self.stddev}")

    @property
    def standardization(self) -> Optional[Tuple[float, float]]:
        if self.mean is None or self.stddev is None:
            return None
        return (self.mean, self.stddev)

    def schema_key(self) -> Tuple:
        return (self.name, self.kind.value, self.categories)

    def unfitted(self) -> "ColumnSpec":
        return replace(self, mean=None, stddev=None)


class ColumnSchema(BaseModel):
    name: str
    kind: ColumnKind
    categories: Optional[List[str]] = None


class TableSchema(BaseModel):
    """The schema file: ``{"columns": [...], "target": "<name>"}``."""

    columns: List[ColumnSchema]
    target: str

    @model_validator(mode="after")
    def _check(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        by_name = {c.name: c for c in self.columns}
        if self.target not in by_name:
            raise ValueError(f"target '{self.target}' is not a schema column")
        if by_name[self.target].kind != ColumnKind.NUMERIC:
            raise ValueError(f"target '{self.target}' must be numeric")
        return self

    def column_specs(self) -> List[ColumnSpec]:
        return [ColumnSpec(c.name, c.kind, tuple(c.categories or ())) for c in self.columns]


def load_schema(path: PathLike) -> TableSchema:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Schema file not found: {path}")
    try:
        return TableSchema.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise SchemaError(f"Invalid schema file {path}: {e}") from e


@dataclass(frozen=True)
class Dataset:
    """
    Typed table with a designated numeric target column.

    ``synthetic_mask`` marks rows appended by a generator; it is metadata
    only and never enters the feature matrix.
    """
    columns: Tuple[ColumnSpec, ...]
    frame: pd.DataFrame
    target: int
    synthetic_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        columns = tuple(self.columns)
        object.__setattr__(self, "columns", columns)
        names = [c.name for c in columns]
        if list(self.frame.columns) != names:
            raise SchemaError(f"Frame columns {list(self.frame.columns)} do not match schema {names}")
        if not 0 <= self.target < len(columns):
            raise SchemaError(f"Target index {self.target} out of range")
        if columns[self.target].kind != ColumnKind.NUMERIC:
            raise SchemaError(f"Target column '{names[self.target]}' must be numeric")

        frame = self.frame.reset_index(drop=True).copy()
        for spec in columns:
            if spec.kind == ColumnKind.NUMERIC:
                frame[spec.name] = frame[spec.name].astype(np.float64)
            elif spec.kind == ColumnKind.INTEGER:
                frame[spec.name] = frame[spec.name].astype(np.int64)
            else:
                if not spec.categories:
                    raise SchemaError(f"Categorical column '{spec.name}' has no categories")
                frame[spec.name] = frame[spec.name].astype(str).astype(object)
                unknown = ~frame[spec.name].isin(spec.categories)
                if unknown.any():
                    row = int(np.flatnonzero(unknown.to_numpy())[0])
                    raise SchemaError(
                        f"row {row + 1}, column '{spec.name}': unknown category "
                        f"{frame[spec.name].iloc[row]!r}"
                    )
        object.__setattr__(self, "frame", frame)

        mask = self.synthetic_mask
        if mask is None:
            mask = np.zeros(len(frame), dtype=bool)
        mask = np.asarray(mask, dtype=bool).copy()
        if mask.shape != (len(frame),):
            raise ShapeError("synthetic_mask length must equal the row count")
        mask.setflags(write=False)
        object.__setattr__(self, "synthetic_mask", mask)

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def p(self) -> int:
        return len(self.columns) - 1

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.columns]

    @property
    def target_name(self) -> str:
        return self.columns[self.target].name

    @property
    def feature_columns(self) -> List[ColumnSpec]:
        return [c for i, c in enumerate(self.columns) if i != self.target]

    def target_values(self) -> np.ndarray:
        return self.frame[self.target_name].to_numpy(dtype=np.float64)

    def schema_key(self) -> Tuple:
        return (tuple(c.schema_key() for c in self.columns), self.target)

    def schema(self) -> TableSchema:
        return TableSchema(
            columns=[
                ColumnSchema(
                    name=c.name,
                    kind=c.kind,
                    categories=list(c.categories) if c.kind == ColumnKind.CATEGORICAL else None,
                )
                for c in self.columns
            ],
            target=self.target_name,
        )

    def require_rows(self, minimum: int = 2) -> "Dataset":
        if self.n < minimum:
            raise DataError(f"Dataset has {self.n} rows; at least {minimum} required")
        return self

    def take(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            columns=self.columns,
            frame=self.frame.iloc[idx],
            target=self.target,
            synthetic_mask=self.synthetic_mask[idx],
        )

    def concat(self, other: "Dataset") -> "Dataset":
        if self.schema_key() != other.schema_key():
            raise SchemaError("Cannot concatenate datasets with different schemas")
        return Dataset(
            columns=self.columns,
            frame=pd.concat([self.frame, other.frame], ignore_index=True),
            target=self.target,
            synthetic_mask=np.concatenate([self.synthetic_mask, other.synthetic_mask]),
        )

    def mark_synthetic(self) -> "Dataset":
        return replace(self, synthetic_mask=np.ones(self.n, dtype=bool))

    def to_csv(self, path: PathLike):
        self.frame.to_csv(path, index=False, encoding="utf-8")


def _parse_column(raw: pd.Series, spec: ColumnSpec) -> Tuple[pd.Series, ColumnSpec]:
    values = raw.str.strip()
    if spec.kind == ColumnKind.NUMERIC:
        parsed = pd.to_numeric(values, errors="coerce")
        bad = ~np.isfinite(parsed.to_numpy(dtype=np.float64))
        kind_label = "numeric"
    elif spec.kind == ColumnKind.INTEGER:
        bad = ~values.str.fullmatch(r"[+-]?\d+").to_numpy(dtype=bool)
        exact = values.where(~bad, "0").map(int)
        bounds = np.iinfo(np.int64)
        bad |= ~exact.map(lambda v: bounds.min <= v <= bounds.max).to_numpy(dtype=bool)
        parsed = exact.where(~bad, 0).astype(np.int64)
        kind_label = "64-bit integer"
    else:
        if not spec.categories:
            # first-appearance order
            spec = replace(spec, categories=tuple(pd.unique(values)))
        bad = ~values.isin(spec.categories).to_numpy()
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise SchemaError(
                f"row {row + 1}, column '{spec.name}': unknown category {values.iloc[row]!r}"
            )
        return values, spec

    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DataError(
            f"row {row + 1}, column '{spec.name}': cannot parse {raw.iloc[row]!r} as {kind_label}"
        )
    return parsed, spec


def load_csv(
    path: PathLike,
    schema: Union[TableSchema, Sequence[ColumnSpec]],
    target: Optional[str] = None,
) -> Dataset:
    """
    Read a UTF-8, comma separated file whose header matches the schema.

    Rows are numbered from 1 (first data row) in error messages.
    """
    if isinstance(schema, TableSchema):
        target = target or schema.target
        specs = schema.column_specs()
    else:
        specs = list(schema)
    if target is None:
        raise ConfigError("A target column name is required")

    path = Path(path)
    if not path.is_file():
        raise DataError(f"Data file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f"Cannot read {path}: {e}") from e

    names = [s.name for s in specs]
    if list(raw.columns) != names:
        raise SchemaError(f"Header {list(raw.columns)} does not match schema {names}")
    if target not in names:
        raise SchemaError(f"Target '{target}' is not a schema column")
    target_index = names.index(target)
    if specs[target_index].kind != ColumnKind.NUMERIC:
        raise SchemaError(f"Target '{target}' must be numeric")

    columns: Dict[str, pd.Series] = {}
    fitted_specs: List[ColumnSpec] = []
    for spec in specs:
        parsed, spec = _parse_column(raw[spec.name], spec)
        columns[spec.name] = parsed
        fitted_specs.append(spec)

    ds = Dataset(columns=tuple(fitted_specs), frame=pd.DataFrame(columns), target=target_index)
    logger.info(f"Loaded {path}: n={ds.n}, p={ds.p}")
    return ds.require_rows(2)


def write_dataset(ds: Dataset, csv_path: PathLike, schema_path: Optional[PathLike] = None):
    ds.to_csv(csv_path)
    if schema_path is not None:
        Path(schema_path).write_text(
            ds.schema().model_dump_json(indent=2, exclude_none=True), encoding="utf-8"
        )


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureSlot:
    source: str
    role: FeatureRole
    level: Optional[str] = None
    constant: bool = False

    @property
    def label(self) -> str:
        return self.source if self.level is None else f"{self.source}={self.level}"


@dataclass(frozen=True)
class EncodingState:
    """
    Fitted statistics of an encoding, without the encoded values.

    This is what a model file carries so that generation can decode rows
    without the original training matrix.
    """
    columns: Tuple[ColumnSpec, ...]
    target: int
    feature_map: Tuple[FeatureSlot, ...]
    target_standardization: Tuple[float, float]

    @property
    def d(self) -> int:
        return len(self.feature_map)

    @property
    def target_name(self) -> str:
        return self.columns[self.target].name

    @property
    def feature_columns(self) -> List[ColumnSpec]:
        return [c for i, c in enumerate(self.columns) if i != self.target]

    def slices(self) -> Dict[str, slice]:
        spans: Dict[str, slice] = {}
        start = 0
        for spec in self.feature_columns:
            width = len(spec.categories) if spec.kind == ColumnKind.CATEGORICAL else 1
            spans[spec.name] = slice(start, start + width)
            start += width
        return spans

    def schema_key(self) -> Tuple:
        return (tuple(c.schema_key() for c in self.columns), self.target)

    def to_dict(self) -> Dict:
        return {
            "columns": [
                {
                    "name": c.name,
                    "kind": c.kind.value,
                    "categories": list(c.categories),
                    "mean": c.mean,
                    "stddev": c.stddev,
                }
                for c in self.columns
            ],
            "target": self.target,
            "feature_map": [
                {"source": s.source, "role": s.role.value, "level": s.level, "constant": s.constant}
                for s in self.feature_map
            ],
            "target_standardization": list(self.target_standardization),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "EncodingState":
        return cls(
            columns=tuple(
                ColumnSpec(
                    c["name"], c["kind"], tuple(c.get("categories") or ()), c.get("mean"), c.get("stddev")
                )
                for c in data["columns"]
            ),
            target=int(data["target"]),
            feature_map=tuple(
                FeatureSlot(s["source"], FeatureRole(s["role"]), s.get("level"), bool(s.get("constant")))
                for s in data["feature_map"]
            ),
            target_standardization=tuple(float(v) for v in data["target_standardization"]),
        )


@dataclass(frozen=True)
class EncodedMatrix:
    values: np.ndarray
    target_vector: np.ndarray
    state: EncodingState
    warnings: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("values", "target_vector"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def feature_map(self) -> Tuple[FeatureSlot, ...]:
        return self.state.feature_map

    @property
    def target_standardization(self) -> Tuple[float, float]:
        return self.state.target_standardization

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def target_original(self) -> np.ndarray:
        mean, std = self.target_standardization
        return self.target_vector * std + mean


class AppliedEncoding(NamedTuple):
    values: np.ndarray
    target: np.ndarray
    warnings: List[str]


EncodingLike = Union[EncodedMatrix, EncodingState]


def _state_of(em: EncodingLike) -> EncodingState:
    return em.state if isinstance(em, EncodedMatrix) else em


def _population_stats(values: np.ndarray) -> Tuple[float, float, bool]:
    mean = float(np.mean(values))
    if np.ptp(values) == 0:
        return mean, 1.0, True
    return mean, float(np.std(values)), False


def _encode_with(state: EncodingState, ds: Dataset) -> AppliedEncoding:
    names = [c.name for c in state.columns]
    if ds.names != names or ds.target != state.target:
        raise SchemaError(f"Dataset columns {ds.names} do not match encoding columns {names}")
    for fitted, spec in zip(state.columns, ds.columns):
        if fitted.kind != spec.kind:
            raise SchemaError(f"Column '{spec.name}' is {spec.kind.value}, encoding expects {fitted.kind.value}")

    warnings: List[str] = []
    blocks = []
    for spec in state.feature_columns:
        column = ds.frame[spec.name]
        if spec.kind == ColumnKind.CATEGORICAL:
            codes = pd.Categorical(column, categories=list(spec.categories)).codes
            block = np.zeros((ds.n, len(spec.categories)), dtype=np.float64)
            seen = codes >= 0
            block[np.flatnonzero(seen), codes[seen]] = 1.0
            if not seen.all():
                for level in pd.unique(column[~seen]):
                    count = int((column == level).sum())
                    warnings.append(
                        f"column '{spec.name}': unseen category {level!r} in {count} row(s) encoded as zeros"
                    )
        else:
            mean, std = spec.standardization
            block = ((column.to_numpy(dtype=np.float64) - mean) / std)[:, None]
        blocks.append(block)

    values = np.hstack(blocks) if blocks else np.empty((ds.n, 0))
    mean, std = state.target_standardization
    target = (ds.target_values() - mean) / std
    for w in warnings:
        logger.warning(w)
    return AppliedEncoding(values=values, target=target, warnings=warnings)


def fit_encode(ds: Dataset) -> EncodedMatrix:
    """
    Fit standardization statistics on ``ds`` and encode it.

    Zero-variance numeric columns are encoded as constant 0 with a recorded
    stddev of 1 and flagged ``constant`` in the feature map.
    """
    ds.require_rows(2)
    fitted: List[ColumnSpec] = []
    slots: List[FeatureSlot] = []
    target_stats = (0.0, 1.0)
    for index, spec in enumerate(ds.columns):
        if spec.kind == ColumnKind.CATEGORICAL:
            fitted.append(spec.unfitted())
            slots.extend(FeatureSlot(spec.name, FeatureRole.ONE_HOT, level) for level in spec.categories)
            continue
        mean, std, constant = _population_stats(ds.frame[spec.name].to_numpy(dtype=np.float64))
        fitted.append(replace(spec, mean=mean, stddev=std))
        if index == ds.target:
            target_stats = (mean, std)
            if constant:
                logger.warning(f"Target '{spec.name}' is constant")
            continue
        if constant:
            logger.warning(f"Column '{spec.name}' has zero variance; encoded as constant 0")
        slots.append(FeatureSlot(spec.name, FeatureRole.STANDARDIZED, constant=constant))

    state = EncodingState(
        columns=tuple(fitted),
        target=ds.target,
        feature_map=tuple(slots),
        target_standardization=target_stats,
    )
    applied = _encode_with(state, ds)
    return EncodedMatrix(values=applied.values, target_vector=applied.target, state=state)


def apply_encode(em: EncodingLike, ds: Dataset) -> AppliedEncoding:
    """Encode ``ds`` with stored statistics; nothing is refitted."""
    return _encode_with(_state_of(em), ds)


def decode(em: EncodingLike, values: np.ndarray, target: np.ndarray) -> Dataset:
    """
    Map encoded rows back to typed rows.

    Integer columns are rounded half-to-even; a one-hot group decodes to its
    argmax, ties going to the lowest category index.
    """
    state = _state_of(em)
    values = np.asarray(values, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if values.ndim != 2 or values.shape[1] != state.d:
        raise ShapeError(f"Expected an m x {state.d} matrix, got shape {values.shape}")
    if target.shape[0] != values.shape[0]:
        raise ShapeError(f"Target length {target.shape[0]} does not match {values.shape[0]} rows")

    bad = np.argwhere(~np.isfinite(values))
    if len(bad):
        row, col = bad[0]
        raise DataError(f"Non-finite value at row {row}, feature '{state.feature_map[col].label}'")
    bad_target = np.flatnonzero(~np.isfinite(target))
    if len(bad_target):
        raise DataError(f"Non-finite value at row {bad_target[0]}, target '{state.target_name}'")

    spans = state.slices()
    columns: Dict[str, np.ndarray] = {}
    for index, spec in enumerate(state.columns):
        if index == state.target:
            mean, std = state.target_standardization
            columns[spec.name] = target * std + mean
            continue
        block = values[:, spans[spec.name]]
        if spec.kind == ColumnKind.CATEGORICAL:
            levels = np.asarray(spec.categories, dtype=object)
            columns[spec.name] = levels[np.argmax(block, axis=1)] if len(block) else levels[:0]
        else:
            mean, std = spec.standardization
            restored = block[:, 0] * std + mean
            if spec.kind == ColumnKind.INTEGER:
                restored = np.rint(restored).astype(np.int64)
            columns[spec.name] = restored

    return Dataset(
        columns=tuple(c.unfitted() for c in state.columns),
        frame=pd.DataFrame(columns, columns=[c.name for c in state.columns]),
        target=state.target,
    )


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    rng_seed: int

    def fold_sizes(self) -> List[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()

    def split(self, fold: int) -> Tuple[np.ndarray, np.ndarray]:
        if not 0 <= fold < self.k:
            raise ConfigError(f"Fold {fold} out of range for k={self.k}")
        test = self.assignments == fold
        return np.flatnonzero(~test), np.flatnonzero(test)


def kfold(n: int, k: int, seed: int) -> FoldPlan:
    if not 2 <= k <= n:
        raise ConfigError(f"Fold count k={k} must satisfy 2 <= k <= n={n}")
    order = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[order] = np.arange(n) % k
    assignments.setflags(write=False)
    return FoldPlan(k=k, assignments=assignments, rng_seed=int(seed))
