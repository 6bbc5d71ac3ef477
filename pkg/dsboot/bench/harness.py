"""
K-fold ablation benchmark.

For every fold, all fitted state (standardization, KDE bandwidth, relevance
weights, models, latent bandwidths) comes from the training split alone.
Each generation variant augments that split, every regressor is fitted on
the augmented rows and scored on the held-out fold in original target
units. Failures are recorded per cell; the run always completes.
"""

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import partial
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from dsboot import metrics as prom
from dsboot.bench.regressors import RegressorKind, RegressorSpec, make_regressor
from dsboot.bench.report import (
    BenchReport,
    CellResult,
    FoldRecord,
    RunLog,
    SweepEntry,
    SweepReport,
    VariantSummary,
    WilcoxonComparison,
)
from dsboot.bench.scheduler import FoldScheduler
from dsboot.bench.scoring import metrics as score
from dsboot.bench.wilcoxon import wilcoxon_signed_rank
from dsboot.data.tabular import Dataset, EncodedMatrix, apply_encode, fit_encode, kfold
from dsboot.errors import ConfigError, DsbError
from dsboot.generation.latentgen import GenConfig, GenVariant, build_training_set, generate, parse_variant
from dsboot.model import irvae
from dsboot.model.density import RelevanceWeights, relevance_weights, scott_bandwidth, weights_at
from dsboot.model.irvae import ArchitectureSettings, LossVariant, TrainConfig, VaeModel
from dsboot.runtime.event_bus import EventBus, ensure_bus
from dsboot.runtime.events import EventType
from dsboot.runtime.hashing import compute_state_hash, derive_seed
from dsboot.telemetry import get_tracer

logger = logging.getLogger(__name__)

BASELINE = "Baseline"
DEFAULT_VARIANTS = [BASELINE] + [v.value for v in GenVariant]
COMPARED_METRICS = ("rmse", "rare_region_rmse")

_CELL_ERRORS = (DsbError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def _canonical_variant(name: str) -> str:
    if name == BASELINE:
        return name
    try:
        return parse_variant(name).value
    except ConfigError as e:
        raise ValueError(str(e)) from None


def default_regressors() -> List[RegressorSpec]:
    return [RegressorSpec(kind=RegressorKind.RIDGE), RegressorSpec(kind=RegressorKind.KNN)]


class BenchConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    variants: List[str] = Field(default_factory=lambda: list(DEFAULT_VARIANTS))
    regressors: List[RegressorSpec] = Field(default_factory=default_regressors)
    folds: int = Field(default=10, ge=2)
    rare_quantile: float = Field(default=0.9, gt=0, lt=1)
    reference: str = BASELINE
    rng_seed: int = Field(default=0, ge=0)
    train: TrainConfig = Field(default_factory=TrainConfig)
    architecture: ArchitectureSettings = Field(default_factory=ArchitectureSettings)
    generation: GenConfig = Field(default_factory=GenConfig)
    max_concurrency: int = Field(default=1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _reference_always_runs(cls, data: Any) -> Any:
        if not isinstance(data, dict) or data.get("variants") is None:
            return data
        reference = _canonical_variant(data.get("reference", BASELINE))
        names = list(data["variants"])
        if reference not in {_canonical_variant(n) for n in names}:
            logger.info(f"Adding reference variant {reference} to the run")
            data = {**data, "variants": [reference, *names]}
        return data

    @field_validator("variants")
    @classmethod
    def _canonical_variants(cls, names: List[str]) -> List[str]:
        out: List[str] = []
        for name in names:
            canonical = _canonical_variant(name)
            if canonical not in out:
                out.append(canonical)
        if not out:
            raise ValueError("at least one variant is required")
        return out

    @field_validator("reference")
    @classmethod
    def _canonical_reference(cls, name: str) -> str:
        return _canonical_variant(name)

    @model_validator(mode="after")
    def _unique_regressors(self):
        labels = [r.label for r in self.regressors]
        if not labels:
            raise ValueError("at least one regressor is required")
        if len(set(labels)) != len(labels):
            raise ValueError(f"regressor labels must be unique, got {labels}; set 'name' to disambiguate")
        return self

    @property
    def loss_variants(self) -> List[LossVariant]:
        needed = {
            GenVariant(v).required_loss_variant for v in self.variants if v != BASELINE
        }
        return [lv for lv in LossVariant if lv in needed]

    def train_config(self, loss_variant: LossVariant, fold: int) -> TrainConfig:
        return TrainConfig.model_validate({
            **self.train.model_dump(),
            "loss_variant": loss_variant,
            "rng_seed": derive_seed(self.rng_seed, "fold", fold, "train", loss_variant.value),
        })

    def gen_config(self, variant: GenVariant, fold: int) -> GenConfig:
        return self.generation.model_copy(update={
            "variant": variant,
            "rng_seed": derive_seed(self.rng_seed, "fold", fold, "generate", variant.value),
        })


# ---------------------------------------------------------------------------
# Fold-local state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldState:
    fold: int
    train: Dataset
    encoded: EncodedMatrix
    weights: RelevanceWeights
    models: Dict[LossVariant, VaeModel] = field(default_factory=dict)
    model_errors: Dict[LossVariant, Exception] = field(default_factory=dict)


def fit_fold_state(train: Dataset, cfg: BenchConfig, fold: int,
                   event_bus: Optional[EventBus] = None) -> FoldState:
    """Fit everything a fold needs from its training split only."""
    em = fit_encode(train)
    weights = relevance_weights(em.target_vector, cfg.train.alpha, cfg.train.kde())
    arch = cfg.architecture.spec_for(em.d)
    models: Dict[LossVariant, VaeModel] = {}
    errors: Dict[LossVariant, Exception] = {}
    for loss_variant in cfg.loss_variants:
        try:
            result = irvae.train(em, cfg.train_config(loss_variant, fold), arch, event_bus)
            models[loss_variant] = result.model
        except _CELL_ERRORS as e:
            logger.warning(f"Fold {fold}: {loss_variant.value} model failed to train: {e}")
            errors[loss_variant] = e
    return FoldState(fold=fold, train=train, encoded=em, weights=weights, models=models, model_errors=errors)


def fold_fingerprint(state: FoldState) -> str:
    """SHA-256 over the fold's fitted state; equal for equal training splits."""
    latent: Dict[str, Any] = {}
    for loss_variant, model in sorted(state.models.items(), key=lambda kv: kv[0].value):
        mu = irvae.encode_latent(model, state.encoded.values, state.encoded.target_vector).mu
        latent[loss_variant.value] = {
            "parameters": model.parameters().values,
            "latent_bandwidth": scott_bandwidth(mu).per_dim,
        }
    return compute_state_hash({
        "encoding": state.encoded.state.to_dict(),
        "kde_bandwidth": state.weights.bandwidth,
        "weights": state.weights.raw,
        "models": latent,
    })


# ---------------------------------------------------------------------------
# One fold
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldOutcome:
    record: FoldRecord
    cells: List[CellResult]
    seconds: float


def _failed(fold: int, variant: str, regressor: str, error: BaseException) -> CellResult:
    return CellResult(
        fold=fold, variant=variant, regressor=regressor, status="failed",
        error_type=type(error).__name__, error=str(error),
    )


def _training_set(variant: str, state: FoldState, cfg: BenchConfig,
                  event_bus: EventBus) -> Tuple[Dataset, int]:
    if variant == BASELINE:
        return state.train, 0
    gen_variant = GenVariant(variant)
    required = gen_variant.required_loss_variant
    model = None
    if required is not None:
        if required in state.model_errors:
            raise state.model_errors[required]
        model = state.models[required]
    batch = generate(state.train, state.weights, cfg.gen_config(gen_variant, state.fold), model, event_bus)
    return build_training_set(state.train, batch), batch.m


def _report_cell(cell: CellResult, bus: EventBus) -> CellResult:
    prom.bench_cells_counter.labels(status=cell.status).inc()
    if cell.ok:
        bus.publish(EventType.CELL_COMPLETED, fold=cell.fold, variant=cell.variant, regressor=cell.regressor)
    else:
        prom.failures_counter.labels(error_type=cell.error_type).inc()
        bus.publish(
            EventType.CELL_FAILED, fold=cell.fold, variant=cell.variant,
            regressor=cell.regressor, error=cell.error,
        )
    return cell


def run_fold(dataset: Dataset, train_idx: np.ndarray, test_idx: np.ndarray, fold: int,
             cfg: BenchConfig, event_bus: Optional[EventBus] = None) -> FoldOutcome:
    bus = ensure_bus(event_bus)
    started = time.time()
    train, test = dataset.take(train_idx), dataset.take(test_idx)
    labels = [r.label for r in cfg.regressors]

    tracer = get_tracer(__name__)
    with tracer.start_as_current_span("bench.fold", attributes={"fold": fold, "n_train": train.n}):
        bus.publish(EventType.FOLD_STARTED, fold=fold)
        try:
            state = fit_fold_state(train, cfg, fold, bus)
            test_enc = apply_encode(state.encoded, test)
            rare_threshold = float(np.quantile(train.target_values(), cfg.rare_quantile))
            test_weights = np.minimum(
                weights_at(state.encoded.target_vector, state.weights, test_enc.target),
                state.weights.raw.max(),
            )
            fingerprint = fold_fingerprint(state)
        except _CELL_ERRORS as e:
            logger.error(f"Fold {fold} setup failed: {e}")
            cells = [_report_cell(_failed(fold, v, r, e), bus) for v in cfg.variants for r in labels]
            record = FoldRecord(fold=fold, train_rows=train.n, test_rows=test.n, error=str(e))
            return FoldOutcome(record, cells, time.time() - started)

        mean, std = state.encoded.target_standardization
        y_test = test.target_values()
        cells: List[CellResult] = []
        for variant in cfg.variants:
            try:
                augmented, synthetic_rows = _training_set(variant, state, cfg, bus)
                applied = apply_encode(state.encoded, augmented)
            except _CELL_ERRORS as e:
                cells.extend(_report_cell(_failed(fold, variant, r, e), bus) for r in labels)
                continue
            for spec in cfg.regressors:
                try:
                    regressor = make_regressor(spec).fit(applied.values, applied.target)
                    predicted = regressor.predict(test_enc.values) * std + mean
                    cell = CellResult(
                        fold=fold, variant=variant, regressor=spec.label, status="ok",
                        metrics=score(y_test, predicted, test_weights, rare_threshold),
                        train_rows=augmented.n, synthetic_rows=synthetic_rows,
                    )
                except _CELL_ERRORS as e:
                    cell = _failed(fold, variant, spec.label, e)
                cells.append(_report_cell(cell, bus))

        seconds = time.time() - started
        prom.fold_duration.observe(seconds)
        bus.publish(EventType.FOLD_COMPLETED, fold=fold)

    record = FoldRecord(
        fold=fold, train_rows=train.n, test_rows=test.n,
        rare_threshold=rare_threshold, fingerprint=fingerprint,
    )
    return FoldOutcome(record, cells, seconds)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def _std(values: Sequence[float]) -> Optional[float]:
    return float(np.std(values, ddof=1)) if len(values) >= 2 else None


def summarize(cells: List[CellResult], variants: List[str], regressors: List[str]) -> List[VariantSummary]:
    summaries = []
    for variant in variants:
        for regressor in regressors:
            group = [c for c in cells if c.variant == variant and c.regressor == regressor]
            ok = [c for c in group if c.ok]

            def values(name: str) -> List[float]:
                return [c.metric(name) for c in ok if c.metric(name) is not None]

            summaries.append(VariantSummary(
                variant=variant,
                regressor=regressor,
                n_ok=len(ok),
                n_failed=len(group) - len(ok),
                rmse_mean=_mean(values("rmse")),
                rmse_std=_std(values("rmse")),
                mae_mean=_mean(values("mae")),
                weighted_mse_mean=_mean(values("weighted_mse")),
                r2_mean=_mean(values("r2")),
                rare_region_rmse_mean=_mean(values("rare_region_rmse")),
                rare_region_rmse_std=_std(values("rare_region_rmse")),
            ))
    return summaries


def compare(cells: List[CellResult], variants: List[str], regressors: List[str],
            reference: str) -> List[WilcoxonComparison]:
    """Paired two-sided signed-rank tests of each variant against ``reference`` over folds."""
    if reference not in variants:
        logger.warning(f"Reference variant {reference} not in the run; no comparisons computed")
        return []
    index = {(c.fold, c.variant, c.regressor): c for c in cells if c.ok}
    folds = sorted({c.fold for c in cells})
    comparisons = []
    for variant in variants:
        if variant == reference:
            continue
        for regressor in regressors:
            for metric in COMPARED_METRICS:
                pairs = []
                for fold in folds:
                    mine, ref = index.get((fold, variant, regressor)), index.get((fold, reference, regressor))
                    if mine is None or ref is None:
                        continue
                    a, b = mine.metric(metric), ref.metric(metric)
                    if a is not None and b is not None:
                        pairs.append((a, b))
                if not pairs:
                    continue
                a, b = np.array(pairs).T
                result = wilcoxon_signed_rank(a, b)
                comparisons.append(WilcoxonComparison(
                    variant=variant, reference=reference, regressor=regressor, metric=metric,
                    n_pairs=len(pairs), wins=int((a < b).sum()),
                    statistic=result.statistic, p_value=result.p_value, method=result.method,
                ))
    return comparisons


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def run_benchmark(dataset: Dataset, cfg: BenchConfig, event_bus: Optional[EventBus] = None,
                  run_config: Optional[Dict[str, Any]] = None) -> BenchReport:
    """
    Run every (fold, variant, regressor) cell and assemble the report.

    Folds run on up to ``cfg.max_concurrency`` worker threads; results are
    merged in fold order, so the report does not depend on concurrency.
    """
    bus = ensure_bus(event_bus)
    dataset.require_rows(2)
    plan = kfold(dataset.n, cfg.folds, derive_seed(cfg.rng_seed, "folds"))
    labels = [r.label for r in cfg.regressors]
    started_at = datetime.now(timezone.utc)
    started = time.time()

    jobs = {}
    for fold in range(cfg.folds):
        train_idx, test_idx = plan.split(fold)
        jobs[fold] = partial(run_fold, dataset, train_idx, test_idx, fold, cfg, bus)

    tracer = get_tracer(__name__)
    with tracer.start_as_current_span(
        "bench.run", attributes={"folds": cfg.folds, "variants": len(cfg.variants)}
    ):
        outcomes = FoldScheduler(cfg.max_concurrency).run_sync(jobs)

    records: List[FoldRecord] = []
    cells: List[CellResult] = []
    fold_seconds: Dict[int, float] = {}
    for fold, outcome in outcomes.items():
        if isinstance(outcome, Exception):
            train_idx, test_idx = plan.split(fold)
            records.append(FoldRecord(
                fold=fold, train_rows=len(train_idx), test_rows=len(test_idx), error=str(outcome),
            ))
            cells.extend(
                _report_cell(_failed(fold, v, r, outcome), bus) for v in cfg.variants for r in labels
            )
            continue
        records.append(outcome.record)
        cells.extend(outcome.cells)
        fold_seconds[fold] = outcome.seconds

    failed = sum(1 for c in cells if not c.ok)
    bus.publish(EventType.BENCHMARK_COMPLETED, ok=len(cells) - failed, failed=failed)

    return BenchReport(
        config=cfg.model_dump(mode="json"),
        run_config=run_config,
        reference=cfg.reference,
        folds=records,
        cells=cells,
        summaries=summarize(cells, cfg.variants, labels),
        comparisons=compare(cells, cfg.variants, labels, cfg.reference),
        run_log=RunLog(
            started_at=started_at,
            finished_at=datetime.now(timezone.utc),
            duration_seconds=time.time() - started,
            fold_seconds=fold_seconds,
        ),
    )


def sweep_beta_corr(dataset: Dataset, values: Sequence[float], cfg: BenchConfig,
                    event_bus: Optional[EventBus] = None,
                    run_config: Optional[Dict[str, Any]] = None) -> SweepReport:
    """
    Re-run the DSB variant once per decorrelation weight.

    Folds, seeds and every other setting are shared across values, so the
    entries differ only through ``beta_corr``.
    """
    if not values:
        raise ConfigError("sweep needs at least one beta_corr value")
    try:
        train_configs = [
            TrainConfig.model_validate({**cfg.train.model_dump(), "beta_corr": float(v)}) for v in values
        ]
    except ValidationError as e:
        raise ConfigError(f"Invalid beta_corr value: {e}") from e

    baseline = run_benchmark(
        dataset, cfg.model_copy(update={"variants": [BASELINE], "reference": BASELINE}), event_bus
    )
    dsb = GenVariant.DSB.value
    entries: List[SweepEntry] = []
    for train_cfg in train_configs:
        logger.info(f"Sweep: beta_corr={train_cfg.beta_corr}")
        report = run_benchmark(
            dataset,
            cfg.model_copy(update={"variants": [dsb], "reference": dsb, "train": train_cfg}),
            event_bus,
        )
        for spec in cfg.regressors:
            summary = report.summary(dsb, spec.label)
            entries.append(SweepEntry(
                beta_corr=train_cfg.beta_corr,
                regressor=spec.label,
                n_ok=summary.n_ok,
                rmse_mean=summary.rmse_mean,
                rare_region_rmse_mean=summary.rare_region_rmse_mean,
            ))

    return SweepReport(
        config=cfg.model_dump(mode="json"),
        run_config=run_config,
        variant=dsb,
        values=[t.beta_corr for t in train_configs],
        baseline=baseline.summaries,
        entries=entries,
    )
