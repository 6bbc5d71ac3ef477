"""
Synthetic-row generation for imbalanced regression.

Every variant first selects seed rows by drawing from the normalized
relevance weights, then turns each seed into a synthetic row:

    resample   copy the original row (variant OS)
    natural    sample z ~ N(mu_i, exp(logvar_i)) and decode (BVAE, BVAEw)
    smoothed   z = mu_i + hmult * h * eps with Scott bandwidths h, then
               decode (SB_AE, kBVAE, kBVAEw, DSB)

The synthetic target always comes from the decoder's y head, except for
OS where it is copied with the row.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from dsboot import metrics
from dsboot.data.tabular import Dataset, decode
from dsboot.errors import ConfigError, DataError, ShapeError, VariantMismatchError
from dsboot.generation.base import GenerationContext, GenerationStrategy
from dsboot.generation.registry import StrategyRegistry
from dsboot.model.density import BandwidthSpec, KdeConfig, RelevanceWeights, relevance_weights, scott_bandwidth
from dsboot.model.irvae import LossVariant, VaeModel, decode_latent, encode_latent, natural_generate
from dsboot.runtime.event_bus import EventBus, ensure_bus
from dsboot.runtime.events import EventType
from dsboot.runtime.hashing import rng_for
from dsboot.telemetry import get_tracer

logger = logging.getLogger(__name__)

_ALIASES = {"kAE": "SB_AE", "SB+AE": "SB_AE", "OVAE": "OS"}


class GenVariant(str, Enum):
    OS = "OS"
    SB_AE = "SB_AE"
    BVAE = "BVAE"
    KBVAE = "kBVAE"
    BVAEW = "BVAEw"
    KBVAEW = "kBVAEw"
    DSB = "DSB"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str) and value in _ALIASES:
            return cls(_ALIASES[value])
        return None

    @property
    def required_loss_variant(self) -> Optional[LossVariant]:
        return _REQUIRED_LOSS[self]

    @property
    def strategy(self) -> str:
        return _STRATEGY[self]


_REQUIRED_LOSS = {
    GenVariant.OS: None,
    GenVariant.SB_AE: LossVariant.AUTOENCODER,
    GenVariant.BVAE: LossVariant.PLAIN,
    GenVariant.KBVAE: LossVariant.PLAIN,
    GenVariant.BVAEW: LossVariant.BALANCED,
    GenVariant.KBVAEW: LossVariant.BALANCED,
    GenVariant.DSB: LossVariant.FINAL,
}

_STRATEGY = {
    GenVariant.OS: "resample",
    GenVariant.SB_AE: "smoothed",
    GenVariant.BVAE: "natural",
    GenVariant.KBVAE: "smoothed",
    GenVariant.BVAEW: "natural",
    GenVariant.KBVAEW: "smoothed",
    GenVariant.DSB: "smoothed",
}


def parse_variant(name: Union[str, GenVariant]) -> GenVariant:
    try:
        return GenVariant(name)
    except ValueError:
        known = [v.value for v in GenVariant] + sorted(_ALIASES)
        raise ConfigError(f"Unknown variant '{name}'; expected one of {known}") from None


class GenConfig(BaseModel):
    """
    ``m`` defaults to the training size when left unset.
    """
    model_config = ConfigDict(frozen=True)

    m: Optional[int] = Field(default=None, ge=1)
    hmult: float = Field(default=1.0, gt=0)
    rng_seed: int = Field(default=0, ge=0)
    variant: GenVariant = GenVariant.DSB
    augment_mode: Literal["append"] = "append"

    @field_validator("variant", mode="before")
    @classmethod
    def _resolve_alias(cls, value):
        if isinstance(value, str) and value in _ALIASES:
            return _ALIASES[value]
        return value


@dataclass(frozen=True)
class SeedProvenance:
    seed_index: int
    variant: str


@dataclass(frozen=True)
class SyntheticBatch:
    dataset: Dataset
    provenance: Tuple[SeedProvenance, ...]
    rng_seed: int
    variant: GenVariant

    def __post_init__(self):
        if len(self.provenance) != self.dataset.n:
            raise ShapeError("Provenance must list one entry per synthetic row")

    @property
    def m(self) -> int:
        return self.dataset.n

    @property
    def seed_indices(self) -> np.ndarray:
        return np.array([p.seed_index for p in self.provenance], dtype=np.int64)


# ---------------------------------------------------------------------------
# Sampling primitives
# ---------------------------------------------------------------------------


def sample_seeds(weights: RelevanceWeights, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``m`` row indices i.i.d. from the normalized weights."""
    if m < 1:
        raise ConfigError(f"Number of synthetic rows must be >= 1, got {m}")
    p = weights.normalized
    if p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
        raise DataError("Seed weights must be finite and nonnegative")
    return rng.choice(p.size, size=m, replace=True, p=p)


def perturb_seeds(mu: np.ndarray, seeds: np.ndarray, bw: BandwidthSpec,
                  rng: np.random.Generator) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 2 or mu.shape[1] != bw.q:
        raise ShapeError(f"Bandwidth has {bw.q} dimensions, latent matrix has shape {mu.shape}")
    noise = rng.standard_normal((len(seeds), bw.q))
    return mu[seeds] + bw.effective * noise


def smoothed_bootstrap(latent_mu: np.ndarray, weights: RelevanceWeights, bw: BandwidthSpec, m: int,
                       rng: np.random.Generator) -> np.ndarray:
    """
    Sample ``m`` points from the weighted Gaussian kernel mixture centred on
    the rows of ``latent_mu`` with diagonal bandwidth ``bw.effective``.
    """
    latent_mu = np.asarray(latent_mu, dtype=np.float64)
    if latent_mu.ndim != 2 or weights.n != latent_mu.shape[0]:
        raise ShapeError(f"{weights.n} weights for a latent matrix of shape {latent_mu.shape}")
    seeds = sample_seeds(weights, m, rng)
    return perturb_seeds(latent_mu, seeds, bw, rng)


def selection_weights(target: np.ndarray, alpha: float, kde: Optional[KdeConfig] = None) -> RelevanceWeights:
    """Relevance weights of a target column, estimated on its standardized values."""
    y = np.asarray(target, dtype=np.float64)
    std = float(np.std(y))
    z = (y - np.mean(y)) / (std if std > 0 else 1.0)
    return relevance_weights(z, alpha, kde)


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


class ResampleStrategy(GenerationStrategy):

    name = "resample"

    def generate(self, ctx: GenerationContext, seeds: np.ndarray, rng: np.random.Generator) -> Dataset:
        return ctx.dataset.take(seeds)


class NaturalStrategy(GenerationStrategy):

    name = "natural"

    def generate(self, ctx: GenerationContext, seeds: np.ndarray, rng: np.random.Generator) -> Dataset:
        model = ctx.require_model(self.name)
        latent = encode_latent(model, ctx.x, ctx.y)
        x_hat, y_hat, _ = natural_generate(model, latent, seeds, rng)
        return decode(model.encoding, x_hat, y_hat)


class SmoothedStrategy(GenerationStrategy):

    name = "smoothed"

    def generate(self, ctx: GenerationContext, seeds: np.ndarray, rng: np.random.Generator) -> Dataset:
        model = ctx.require_model(self.name)
        mu = encode_latent(model, ctx.x, ctx.y).mu
        z = perturb_seeds(mu, seeds, scott_bandwidth(mu, ctx.hmult), rng)
        x_hat, y_hat = decode_latent(model, z)
        return decode(model.encoding, x_hat, y_hat)


StrategyRegistry.register("resample", ResampleStrategy)
StrategyRegistry.register("natural", NaturalStrategy)
StrategyRegistry.register("smoothed", SmoothedStrategy)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def check_compatibility(variant: GenVariant, model: Optional[VaeModel]):
    required = variant.required_loss_variant
    if required is None:
        return
    if model is None:
        raise VariantMismatchError(
            f"Variant {variant.value} needs a model trained with the '{required.value}' loss"
        )
    if model.loss_variant != required:
        raise VariantMismatchError(
            f"Variant {variant.value} needs a model trained with the '{required.value}' loss, "
            f"got a '{model.loss_variant.value}' model"
        )


def generate(dataset: Dataset, weights: RelevanceWeights, cfg: GenConfig,
             model: Optional[VaeModel] = None, event_bus: Optional[EventBus] = None) -> SyntheticBatch:
    """
    Build ``cfg.m`` synthetic rows from ``dataset`` with the configured variant.

    ``weights`` must cover the rows of ``dataset``; they drive seed selection
    for every variant.
    """
    variant = cfg.variant
    check_compatibility(variant, model)
    if weights.n != dataset.n:
        raise ShapeError(f"{weights.n} weights for a training set of {dataset.n} rows")
    m = cfg.m or dataset.n

    strategy = StrategyRegistry.get_strategy(variant.strategy)()
    ctx = GenerationContext.build(
        dataset, weights, model if variant.required_loss_variant else None, cfg.hmult
    )
    rng = rng_for(cfg.rng_seed, "latentgen", variant.value)

    tracer = get_tracer(__name__)
    with tracer.start_as_current_span("latentgen.generate", attributes={"variant": variant.value, "m": m}):
        seeds = sample_seeds(weights, m, rng)
        rows = strategy.generate(ctx, seeds, rng).mark_synthetic()

    metrics.synthetic_rows_counter.labels(variant=variant.value).inc(m)
    ensure_bus(event_bus).publish(EventType.GENERATION_COMPLETED, variant=variant.value, m=m)
    provenance = tuple(SeedProvenance(int(s), variant.value) for s in seeds)
    return SyntheticBatch(dataset=rows, provenance=provenance, rng_seed=cfg.rng_seed, variant=variant)


def build_training_set(original: Dataset, synth: Optional[SyntheticBatch]) -> Dataset:
    """Original rows followed by the synthetic rows (flagged in ``synthetic_mask``)."""
    if synth is None or synth.m == 0:
        return original
    return original.concat(synth.dataset)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


class ProvenanceRow(BaseModel):
    seed_index: int


class ProvenanceFile(BaseModel):
    variant: str
    rng_seed: int
    rows: List[ProvenanceRow]
    run_config: Optional[Dict[str, Any]] = None


def write_synthetic(batch: SyntheticBatch, csv_path: Union[str, Path], sidecar_path: Union[str, Path],
                    run_config: Optional[Dict[str, Any]] = None):
    batch.dataset.to_csv(csv_path)
    sidecar = ProvenanceFile(
        variant=batch.variant.value,
        rng_seed=batch.rng_seed,
        rows=[ProvenanceRow(seed_index=p.seed_index) for p in batch.provenance],
        run_config=run_config,
    )
    Path(sidecar_path).write_text(sidecar.model_dump_json(indent=2, exclude_none=True), encoding="utf-8")
    logger.info(f"Wrote {batch.m} synthetic rows to {csv_path}")
