"""
Benchmark report models and writers.

``BenchReport`` serializes to byte-identical JSON for identical inputs;
wall-clock timings live in ``RunLog`` and are written separately.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import pandas as pd
from pydantic import BaseModel, Field

from dsboot.bench.scoring import MetricSet

PathLike = Union[str, Path]

CSV_COLUMNS = [
    "fold", "variant", "regressor", "status", "rmse", "mae", "weighted_mse", "r2",
    "rare_region_rmse", "rare_count", "train_rows", "synthetic_rows", "error_type", "error",
]


class CellResult(BaseModel):
    fold: int
    variant: str
    regressor: str
    status: Literal["ok", "failed"]
    metrics: Optional[MetricSet] = None
    train_rows: Optional[int] = None
    synthetic_rows: Optional[int] = None
    error_type: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def metric(self, name: str) -> Optional[float]:
        return getattr(self.metrics, name) if self.metrics is not None else None

    def to_row(self) -> Dict[str, Any]:
        row = {
            "fold": self.fold,
            "variant": self.variant,
            "regressor": self.regressor,
            "status": self.status,
            "train_rows": self.train_rows,
            "synthetic_rows": self.synthetic_rows,
            "error_type": self.error_type,
            "error": self.error,
        }
        row.update(self.metrics.model_dump() if self.metrics is not None else {})
        return row


class FoldRecord(BaseModel):
    fold: int
    train_rows: int
    test_rows: int
    rare_threshold: Optional[float] = None
    fingerprint: Optional[str] = None
    error: Optional[str] = None


class VariantSummary(BaseModel):
    variant: str
    regressor: str
    n_ok: int
    n_failed: int
    rmse_mean: Optional[float] = None
    rmse_std: Optional[float] = None
    mae_mean: Optional[float] = None
    weighted_mse_mean: Optional[float] = None
    r2_mean: Optional[float] = None
    rare_region_rmse_mean: Optional[float] = None
    rare_region_rmse_std: Optional[float] = None


class WilcoxonComparison(BaseModel):
    variant: str
    reference: str
    regressor: str
    metric: str
    n_pairs: int
    wins: int
    statistic: float
    p_value: float = Field(ge=0, le=1)
    method: str


class RunLog(BaseModel):
    started_at: datetime
    finished_at: datetime
    duration_seconds: float
    fold_seconds: Dict[int, float] = Field(default_factory=dict)


class BenchReport(BaseModel):
    config: Dict[str, Any]
    run_config: Optional[Dict[str, Any]] = None
    reference: str
    folds: List[FoldRecord]
    cells: List[CellResult]
    summaries: List[VariantSummary]
    comparisons: List[WilcoxonComparison]
    run_log: Optional[RunLog] = Field(default=None, exclude=True)

    def cell(self, fold: int, variant: str, regressor: str) -> CellResult:
        for c in self.cells:
            if (c.fold, c.variant, c.regressor) == (fold, variant, regressor):
                return c
        raise KeyError((fold, variant, regressor))

    def summary(self, variant: str, regressor: str) -> VariantSummary:
        for s in self.summaries:
            if (s.variant, s.regressor) == (variant, regressor):
                return s
        raise KeyError((variant, regressor))

    @property
    def failed_cells(self) -> List[CellResult]:
        return [c for c in self.cells if not c.ok]

    @property
    def all_failed(self) -> bool:
        return bool(self.cells) and len(self.failed_cells) == len(self.cells)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([c.to_row() for c in self.cells], columns=CSV_COLUMNS)


class SweepEntry(BaseModel):
    beta_corr: float
    regressor: str
    n_ok: int
    rmse_mean: Optional[float] = None
    rare_region_rmse_mean: Optional[float] = None


class SweepReport(BaseModel):
    config: Dict[str, Any]
    run_config: Optional[Dict[str, Any]] = None
    variant: str
    values: List[float]
    baseline: List[VariantSummary]
    entries: List[SweepEntry]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([e.model_dump() for e in self.entries])


def write_report(report: Union[BenchReport, SweepReport], json_path: PathLike,
                 csv_path: Optional[PathLike] = None):
    Path(json_path).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    if csv_path is not None:
        report.to_frame().to_csv(csv_path, index=False)


def write_run_log(log: RunLog, path: PathLike):
    Path(path).write_text(log.model_dump_json(indent=2), encoding="utf-8")
