"""
Supervised beta-VAE for imbalanced regression.

The encoder reads the encoded features together with the standardized
target and outputs a Gaussian posterior (mu, logvar). The decoder has two
heads: feature reconstruction and target prediction. Four loss variants
share one implementation:

    plain        beta_x * recon_x + beta_y * recon_y + beta_kl * KL
    balanced     recon_y weighted per row by 1 / f(y)^alpha
    final        balanced + beta_corr * sum_{a != b} r(z_a, z_b)^2
    autoencoder  deterministic z = mu, unweighted, no KL
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

from dsboot import metrics
from dsboot.data.tabular import EncodedMatrix, EncodingState
from dsboot.errors import ConfigError, NonFiniteError, ShapeError, TrainingDivergence
from dsboot.model.density import KdeConfig, RelevanceWeights, relevance_weights
from dsboot.model.gradcore import (
    Activation,
    DenseLayer,
    OptimizerState,
    ParamVector,
    adam_step,
    backward,
    correlation_matrix,
    correlation_penalty,
    forward,
    init_layer,
    kl_gaussian,
    kl_gaussian_grad,
    reparameterize,
    reparameterize_backward,
    squared_error,
)
from dsboot.runtime.event_bus import EventBus, ensure_bus
from dsboot.runtime.events import EventType
from dsboot.runtime.hashing import rng_for
from dsboot.telemetry import get_tracer

logger = logging.getLogger(__name__)

LOGVAR_BOUND = 20.0


class LossVariant(str, Enum):
    PLAIN = "plain"
    BALANCED = "balanced"
    FINAL = "final"
    AUTOENCODER = "autoencoder"


class ArchitectureSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(ge=1)
    latent_dim: int = Field(ge=1)
    encoder_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    decoder_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    activation: Activation = Activation.TANH

    @field_validator("encoder_hidden", "decoder_hidden")
    @classmethod
    def _positive_widths(cls, widths: List[int]) -> List[int]:
        if any(w < 1 for w in widths):
            raise ValueError("layer widths must be >= 1")
        return widths

    @field_validator("activation")
    @classmethod
    def _hidden_activation(cls, activation: Activation) -> Activation:
        if activation == Activation.IDENTITY:
            raise ValueError("hidden activation must be relu or tanh")
        return activation

    @property
    def decoder_output_dim(self) -> int:
        return self.input_dim + 1

    @classmethod
    def default_for(cls, input_dim: int, **overrides) -> "ArchitectureSpec":
        latent = overrides.pop("latent_dim", None) or max(1, min(8, math.ceil(input_dim / 2)))
        return cls(input_dim=input_dim, latent_dim=latent, **overrides)


class ArchitectureSettings(BaseModel):
    """Layer choices independent of the encoded width; ``latent_dim`` None means min(8, ceil(d/2))."""
    model_config = ConfigDict(frozen=True)

    latent_dim: Optional[int] = Field(default=None, ge=1)
    encoder_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    decoder_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    activation: Activation = Activation.TANH

    def spec_for(self, input_dim: int) -> ArchitectureSpec:
        return ArchitectureSpec.default_for(
            input_dim,
            latent_dim=self.latent_dim,
            encoder_hidden=list(self.encoder_hidden),
            decoder_hidden=list(self.decoder_hidden),
            activation=self.activation,
        )


class TrainConfig(BaseModel):
    """
    Loss coefficients and optimization settings.

    Defaults: beta_x=1, beta_y=3, alpha=1, beta_kl=1e-5, beta_corr=1.
    """
    model_config = ConfigDict(frozen=True)

    beta_x: float = Field(default=1.0, ge=0)
    beta_y: float = Field(default=3.0, ge=0)
    beta_kl: float = Field(default=1e-5, ge=0)
    beta_corr: float = Field(default=1.0, ge=0)
    alpha: float = Field(default=1.0, ge=0)
    epochs: int = Field(default=500, ge=0)
    batch_size: int = Field(default=64, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_epsilon: float = Field(default=1e-8, gt=0)
    rng_seed: int = Field(default=0, ge=0)
    loss_variant: LossVariant = LossVariant.FINAL
    kde_bandwidth: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _batch_for_correlation(self):
        if self.loss_variant == LossVariant.FINAL and self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 with the final loss (correlation needs two rows)")
        return self

    @property
    def uses_weights(self) -> bool:
        return self.loss_variant in (LossVariant.BALANCED, LossVariant.FINAL)

    @property
    def effective_beta_corr(self) -> float:
        return self.beta_corr if self.loss_variant == LossVariant.FINAL else 0.0

    @property
    def effective_beta_kl(self) -> float:
        return 0.0 if self.loss_variant == LossVariant.AUTOENCODER else self.beta_kl

    @property
    def stochastic(self) -> bool:
        return self.loss_variant != LossVariant.AUTOENCODER

    def kde(self) -> KdeConfig:
        return KdeConfig(bandwidth=self.kde_bandwidth)


@dataclass(frozen=True)
class VaeModel:
    arch: ArchitectureSpec
    encoder: Tuple[DenseLayer, ...]
    mu_head: DenseLayer
    logvar_head: DenseLayer
    decoder: Tuple[DenseLayer, ...]
    x_head: DenseLayer
    y_head: DenseLayer
    train_config: TrainConfig
    encoding: Optional[EncodingState] = None

    @classmethod
    def initialize(cls, arch: ArchitectureSpec, cfg: TrainConfig, rng: np.random.Generator,
                   encoding: Optional[EncodingState] = None) -> "VaeModel":
        def body(widths: Sequence[int], in_dim: int) -> Tuple[Tuple[DenseLayer, ...], int]:
            layers = []
            for width in widths:
                layers.append(init_layer(rng, in_dim, width, arch.activation))
                in_dim = width
            return tuple(layers), in_dim

        encoder, enc_out = body(arch.encoder_hidden, arch.input_dim + 1)
        mu_head = init_layer(rng, enc_out, arch.latent_dim)
        logvar_head = init_layer(rng, enc_out, arch.latent_dim)
        decoder, dec_out = body(arch.decoder_hidden, arch.latent_dim)
        x_head = init_layer(rng, dec_out, arch.input_dim)
        y_head = init_layer(rng, dec_out, 1)
        return cls(arch, encoder, mu_head, logvar_head, decoder, x_head, y_head, cfg, encoding)

    def layer_groups(self) -> Dict[str, Tuple[DenseLayer, ...]]:
        return {
            "encoder": self.encoder,
            "mu_head": (self.mu_head,),
            "logvar_head": (self.logvar_head,),
            "decoder": self.decoder,
            "x_head": (self.x_head,),
            "y_head": (self.y_head,),
        }

    def parameters(self) -> ParamVector:
        return ParamVector.flatten(self.layer_groups())

    def with_parameters(self, params: ParamVector) -> "VaeModel":
        groups = params.unflatten(self.layer_groups())
        return replace(
            self,
            encoder=groups["encoder"],
            mu_head=groups["mu_head"][0],
            logvar_head=groups["logvar_head"][0],
            decoder=groups["decoder"],
            x_head=groups["x_head"][0],
            y_head=groups["y_head"][0],
        )

    @property
    def loss_variant(self) -> LossVariant:
        return self.train_config.loss_variant


@dataclass(frozen=True)
class LatentSummary:
    mu: np.ndarray
    logvar: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.logvar.shape:
            raise ShapeError("mu and logvar must have the same shape")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.logvar))):
            raise NonFiniteError("Latent summary must be finite")

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def q(self) -> int:
        return self.mu.shape[1]


class LossTerms(NamedTuple):
    recon_x: float
    recon_y_weighted: float
    kl: float
    corr_penalty: float
    total: float


# ---------------------------------------------------------------------------
# Forward / loss / gradient
# ---------------------------------------------------------------------------


def _check_batch(model: VaeModel, x: np.ndarray, y: np.ndarray):
    if x.ndim != 2 or x.shape[1] != model.arch.input_dim:
        raise ShapeError(f"Expected rows with {model.arch.input_dim} features, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise ShapeError(f"Target length {y.shape} does not match {x.shape[0]} rows")


def _encode(model: VaeModel, x: np.ndarray, y: np.ndarray):
    enc = forward(model.encoder, np.hstack([x, y[:, None]]))
    mu_acts = forward([model.mu_head], enc[-1])
    lv_acts = forward([model.logvar_head], enc[-1])
    logvar = np.clip(lv_acts[-1], -LOGVAR_BOUND, LOGVAR_BOUND)
    return enc, mu_acts, lv_acts, logvar


def _decode(model: VaeModel, z: np.ndarray):
    dec = forward(model.decoder, z)
    x_acts = forward([model.x_head], dec[-1])
    y_acts = forward([model.y_head], dec[-1])
    return dec, x_acts, y_acts


@dataclass
class _Pass:
    terms: LossTerms
    cache: Dict[str, object] = field(default_factory=dict)


def _forward_loss(model: VaeModel, x, y, weights_raw, noise, cfg: TrainConfig) -> _Pass:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    _check_batch(model, x, y)
    b = x.shape[0]
    if cfg.loss_variant == LossVariant.FINAL and b < 2:
        raise ShapeError("The final loss needs batches of at least two rows")

    weights = np.asarray(weights_raw, dtype=np.float64).reshape(-1) if cfg.uses_weights else np.ones(b)
    if weights.shape != (b,):
        raise ShapeError(f"Expected {b} weights, got {weights.shape}")
    noise = np.asarray(noise, dtype=np.float64) if cfg.stochastic else np.zeros((b, model.arch.latent_dim))

    enc, mu_acts, lv_acts, logvar = _encode(model, x, y)
    mu = mu_acts[-1]
    z = reparameterize(mu, logvar, noise)
    dec, x_acts, y_acts = _decode(model, z)

    recon_x, g_xhat = squared_error(x_acts[-1], x)
    recon_y, g_yhat = squared_error(y_acts[-1][:, 0], y, weights)
    kl = kl_gaussian(mu, logvar)
    corr, g_corr = correlation_penalty(z)

    beta_kl = cfg.effective_beta_kl
    beta_corr = cfg.effective_beta_corr
    total = cfg.beta_x * recon_x + cfg.beta_y * recon_y + beta_kl * kl + beta_corr * corr
    terms = LossTerms(recon_x, recon_y, kl, corr, total)
    cache = dict(
        enc=enc, mu_acts=mu_acts, lv_acts=lv_acts, logvar=logvar, noise=noise, dec=dec,
        x_acts=x_acts, y_acts=y_acts, g_xhat=g_xhat, g_yhat=g_yhat, g_corr=g_corr,
        beta_kl=beta_kl, beta_corr=beta_corr,
    )
    return _Pass(terms, cache)


def loss_terms(model: VaeModel, batch_x, batch_y, weights_raw, noise, cfg: TrainConfig) -> LossTerms:
    """Evaluate the configured loss variant on one batch."""
    return _forward_loss(model, batch_x, batch_y, weights_raw, noise, cfg).terms


def loss_and_gradient(model: VaeModel, batch_x, batch_y, weights_raw, noise,
                      cfg: TrainConfig) -> Tuple[LossTerms, ParamVector]:
    """Loss terms plus the analytic gradient of ``total`` w.r.t. all parameters."""
    p = _forward_loss(model, batch_x, batch_y, weights_raw, noise, cfg)
    c = p.cache

    g_x_head, g_hd = backward([model.x_head], c["x_acts"], cfg.beta_x * c["g_xhat"])
    g_y_head, g_hd_y = backward([model.y_head], c["y_acts"], cfg.beta_y * c["g_yhat"][:, None])
    g_decoder, g_z = backward(model.decoder, c["dec"], g_hd + g_hd_y)
    g_z = g_z + c["beta_corr"] * c["g_corr"]

    logvar = c["logvar"]
    g_mu, g_lv = reparameterize_backward(logvar, c["noise"], g_z)
    k_mu, k_lv = kl_gaussian_grad(c["mu_acts"][-1], logvar)
    g_mu = g_mu + c["beta_kl"] * k_mu
    g_lv = (g_lv + c["beta_kl"] * k_lv) * (np.abs(c["lv_acts"][-1]) < LOGVAR_BOUND)

    g_mu_head, g_h = backward([model.mu_head], c["mu_acts"], g_mu)
    g_lv_head, g_h_lv = backward([model.logvar_head], c["lv_acts"], g_lv)
    g_encoder, _ = backward(model.encoder, c["enc"], g_h + g_h_lv)

    grad = ParamVector.flatten({
        "encoder": g_encoder,
        "mu_head": g_mu_head,
        "logvar_head": g_lv_head,
        "decoder": g_decoder,
        "x_head": g_x_head,
        "y_head": g_y_head,
    })
    return p.terms, grad


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochLoss:
    epoch: int
    recon_x: float
    recon_y_weighted: float
    kl: float
    corr_penalty: float
    total: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "epoch": self.epoch,
            "recon_x": self.recon_x,
            "recon_y_weighted": self.recon_y_weighted,
            "kl": self.kl,
            "corr_penalty": self.corr_penalty,
            "total": self.total,
        }


@dataclass(frozen=True)
class TrainResult:
    model: VaeModel
    trace: Tuple[EpochLoss, ...]
    weights: RelevanceWeights


def make_batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    """Split a permutation into batches; a trailing batch of one row joins the previous one."""
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def training_weights(em: EncodedMatrix, cfg: TrainConfig) -> RelevanceWeights:
    """Per-row loss weights fixed before training, from the full training target."""
    if not cfg.uses_weights:
        return RelevanceWeights.uniform(em.n)
    return relevance_weights(em.target_vector, cfg.alpha, cfg.kde())


def train(em: EncodedMatrix, cfg: TrainConfig, arch: Optional[ArchitectureSpec] = None,
          event_bus: Optional[EventBus] = None) -> TrainResult:
    """
    Fit a model on an encoded training set.

    Initialization, shuffling and reparameterization noise each draw from a
    stream derived from ``cfg.rng_seed``, so a fixed config reproduces the
    same parameters bit for bit.
    """
    bus = ensure_bus(event_bus)
    n, d = em.values.shape
    arch = arch or ArchitectureSpec.default_for(d)
    if arch.input_dim != d:
        raise ShapeError(f"Architecture expects {arch.input_dim} features, encoding has {d}")
    if cfg.epochs > 0 and n < cfg.batch_size:
        raise ConfigError(f"Training set of {n} rows is smaller than batch_size={cfg.batch_size}")

    weights = training_weights(em, cfg)
    model = VaeModel.initialize(arch, cfg, rng_for(cfg.rng_seed, "irvae", "init"), em.state)
    shuffle_rng = rng_for(cfg.rng_seed, "irvae", "shuffle")
    noise_rng = rng_for(cfg.rng_seed, "irvae", "noise")

    params = model.parameters()
    state = OptimizerState.initial(
        len(params), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon
    )
    x, y, w = em.values, em.target_vector, weights.raw
    trace: List[EpochLoss] = []
    variant = cfg.loss_variant.value

    tracer = get_tracer(__name__)
    with tracer.start_as_current_span(
        "irvae.train",
        attributes={"loss_variant": variant, "n": n, "d": d, "epochs": cfg.epochs},
    ):
        started = time.time()
        bus.publish(EventType.TRAINING_STARTED, loss_variant=variant, n=n, epochs=cfg.epochs)
        for epoch in range(cfg.epochs):
            sums = np.zeros(5)
            batches = make_batches(shuffle_rng.permutation(n), cfg.batch_size)
            for batch_index, idx in enumerate(batches):
                noise = noise_rng.standard_normal((len(idx), arch.latent_dim))
                try:
                    terms, grad = loss_and_gradient(model, x[idx], y[idx], w[idx], noise, cfg)
                    if not math.isfinite(terms.total):
                        raise NonFiniteError(f"loss is {terms.total}")
                    params, state = adam_step(state, params, grad)
                    model = model.with_parameters(params)
                except NonFiniteError as e:
                    metrics.failures_counter.labels(error_type="TrainingDivergence").inc()
                    raise TrainingDivergence(
                        f"Training diverged at epoch {epoch}, batch {batch_index}: {e}",
                        epoch=epoch, batch=batch_index,
                    ) from e
                sums += np.asarray(terms)
            means = sums / len(batches)
            record = EpochLoss(epoch, *(float(v) for v in means))
            trace.append(record)
            metrics.training_epochs_counter.labels(loss_variant=variant).inc()
            bus.publish(EventType.EPOCH_COMPLETED, epoch=epoch, total=record.total)

        metrics.training_duration.labels(loss_variant=variant).observe(time.time() - started)
        bus.publish(EventType.TRAINING_COMPLETED, loss_variant=variant, epochs=cfg.epochs)

    return TrainResult(model=model, trace=tuple(trace), weights=weights)


# ---------------------------------------------------------------------------
# Inference and generation
# ---------------------------------------------------------------------------


def encode_latent(model: VaeModel, x, y) -> LatentSummary:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    _check_batch(model, x, y)
    _, mu_acts, _, logvar = _encode(model, x, y)
    return LatentSummary(mu=mu_acts[-1], logvar=logvar)


def decode_latent(model: VaeModel, z) -> Tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.arch.latent_dim:
        raise ShapeError(f"Expected an m x {model.arch.latent_dim} latent matrix, got {z.shape}")
    _, x_acts, y_acts = _decode(model, z)
    return x_acts[-1], y_acts[-1][:, 0]


def natural_generate(model: VaeModel, latent: LatentSummary, seeds: Sequence[int],
                     rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Sample z_i ~ N(mu_i, exp(logvar_i)) for each seed row and decode.

    logvar is clamped to [-LOGVAR_BOUND, LOGVAR_BOUND] as in the encoder.
    Returns (x_hat, y_hat, z) in encoded space.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    if seeds.size and (seeds.min() < 0 or seeds.max() >= latent.n):
        raise ShapeError(f"Seed index out of range for {latent.n} latent rows")
    mu = latent.mu[seeds]
    logvar = np.clip(latent.logvar[seeds], -LOGVAR_BOUND, LOGVAR_BOUND)
    z = reparameterize(mu, logvar, rng.standard_normal(mu.shape))
    x_hat, y_hat = decode_latent(model, z)
    return x_hat, y_hat, z


@dataclass(frozen=True)
class LatentDiagnostics:
    mean_abs_offdiag_corr: float
    variance_relevance_spearman: float


def mean_abs_offdiag_corr(mu: np.ndarray) -> float:
    q = mu.shape[1]
    if q < 2:
        return 0.0
    r = correlation_matrix(mu)
    return float(np.abs(r[~np.eye(q, dtype=bool)]).mean())


def latent_diagnostics(latent: LatentSummary, weights: RelevanceWeights) -> LatentDiagnostics:
    """
    Disentanglement and rarity diagnostics on a latent summary.

    The Spearman coefficient relates each row's mean posterior variance to
    its relevance weight; a positive value means the encoder is less certain
    about rare targets.
    """
    if weights.n != latent.n:
        raise ShapeError("Weights and latent summary cover different rows")
    variance = np.exp(latent.logvar).mean(axis=1)
    if np.ptp(variance) == 0 or np.ptp(weights.raw) == 0:
        rho = 0.0
    else:
        rho = float(stats.spearmanr(variance, weights.raw)[0])
    return LatentDiagnostics(mean_abs_offdiag_corr(latent.mu), rho)
