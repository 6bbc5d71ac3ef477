"""
Dense layers, loss primitives with analytic gradients, and Adam.

Everything is float64 numpy. Networks are plain lists of ``DenseLayer``;
``forward`` keeps every activation so ``backward`` can run reverse mode
without a tape. Each loss primitive returns ``(value, gradient)``.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from dsboot.errors import NonFiniteError, ShapeError


class Activation(str, Enum):
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == Activation.RELU:
        return np.maximum(z, 0.0)
    if activation == Activation.TANH:
        return np.tanh(z)
    return z


def _activation_grad(a: np.ndarray, activation: Activation) -> np.ndarray:
    # expressed through the layer output a = act(z)
    if activation == Activation.RELU:
        return (a > 0).astype(np.float64)
    if activation == Activation.TANH:
        return 1.0 - a * a
    return np.ones_like(a)


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if weights.ndim != 2 or bias.shape[0] != weights.shape[0]:
            raise ShapeError(f"Inconsistent layer shapes: weights {weights.shape}, bias {bias.shape}")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise NonFiniteError("Layer parameters must be finite")
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class LayerGradient:
    weights: np.ndarray
    bias: np.ndarray


def init_layer(rng: np.random.Generator, in_dim: int, out_dim: int,
               activation: Activation = Activation.IDENTITY) -> DenseLayer:
    """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero bias."""
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    return DenseLayer(
        weights=rng.uniform(-limit, limit, size=(out_dim, in_dim)),
        bias=np.zeros(out_dim),
        activation=activation,
    )


def forward(layers: Sequence[DenseLayer], x: np.ndarray) -> List[np.ndarray]:
    """
    Run a batch (b x in) through the layers.

    Returns ``[x, a_1, ..., a_L]``; the last entry is the network output.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"Expected a 2-D batch, got shape {a.shape}")
    activations = [a]
    for index, layer in enumerate(layers):
        if a.shape[1] != layer.in_dim:
            raise ShapeError(f"Layer {index} expects {layer.in_dim} inputs, got {a.shape[1]}")
        a = _activate(a @ layer.weights.T + layer.bias, layer.activation)
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"Non-finite output at layer {index}")
        activations.append(a)
    return activations


def backward(
    layers: Sequence[DenseLayer],
    activations: Sequence[np.ndarray],
    output_gradient: np.ndarray,
) -> Tuple[List[LayerGradient], np.ndarray]:
    """
    Reverse-mode pass for a ``forward`` call.

    Returns the per-layer parameter gradients (same order as ``layers``) and
    the gradient with respect to the network input.
    """
    if len(activations) != len(layers) + 1:
        raise ShapeError("Activations do not come from a matching forward call")
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.shape != activations[-1].shape:
        raise ShapeError(f"Output gradient shape {g.shape} != output shape {activations[-1].shape}")
    grads: List[LayerGradient] = [None] * len(layers)
    for index in range(len(layers) - 1, -1, -1):
        layer = layers[index]
        dz = g * _activation_grad(activations[index + 1], layer.activation)
        grads[index] = LayerGradient(weights=dz.T @ activations[index], bias=dz.sum(axis=0))
        g = dz @ layer.weights
    return grads, g


# ---------------------------------------------------------------------------
# Flat parameter view
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSlot:
    group: str
    layer: int
    part: str
    start: int
    stop: int
    shape: Tuple[int, ...]


LayerLike = Union[DenseLayer, LayerGradient]


@dataclass(frozen=True)
class ParamVector:
    """
    All trainable parameters as one flat float64 vector.

    Ordering: groups in mapping order, layers in order, weights (row-major)
    then bias.
    """
    values: np.ndarray
    slots: Tuple[ParamSlot, ...]

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def flatten(cls, groups: Mapping[str, Sequence[LayerLike]]) -> "ParamVector":
        slots: List[ParamSlot] = []
        chunks: List[np.ndarray] = []
        offset = 0
        for group, layers in groups.items():
            for index, layer in enumerate(layers):
                for part in ("weights", "bias"):
                    arr = np.asarray(getattr(layer, part), dtype=np.float64)
                    slots.append(ParamSlot(group, index, part, offset, offset + arr.size, arr.shape))
                    chunks.append(arr.ravel())
                    offset += arr.size
        values = np.concatenate(chunks) if chunks else np.empty(0)
        return cls(values=values, slots=tuple(slots))

    def with_values(self, values: np.ndarray) -> "ParamVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ShapeError(f"Expected {self.values.size} parameters, got {values.size}")
        return replace(self, values=values)

    def unflatten(self, template: Mapping[str, Sequence[DenseLayer]]) -> Dict[str, Tuple[DenseLayer, ...]]:
        parts: Dict[Tuple[str, int], Dict[str, np.ndarray]] = {}
        for slot in self.slots:
            parts.setdefault((slot.group, slot.layer), {})[slot.part] = (
                self.values[slot.start:slot.stop].reshape(slot.shape)
            )
        rebuilt: Dict[str, Tuple[DenseLayer, ...]] = {}
        for group, layers in template.items():
            rebuilt[group] = tuple(
                DenseLayer(
                    weights=parts[(group, i)]["weights"],
                    bias=parts[(group, i)]["bias"],
                    activation=layer.activation,
                )
                for i, layer in enumerate(layers)
            )
        return rebuilt


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerState:
    step: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def initial(cls, size: int, learning_rate: float = 1e-3, beta1: float = 0.9,
                beta2: float = 0.999, epsilon: float = 1e-8) -> "OptimizerState":
        return cls(
            step=0,
            first_moment=np.zeros(size),
            second_moment=np.zeros(size),
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(state: OptimizerState, params: ParamVector, grad: ParamVector) -> Tuple[ParamVector, OptimizerState]:
    """One bias-corrected Adam update."""
    g = grad.values
    if g.shape != params.values.shape or g.shape != state.first_moment.shape:
        raise ShapeError("Parameter, gradient and optimizer state sizes differ")
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        slot = next(s for s in grad.slots if s.start <= bad < s.stop)
        raise NonFiniteError(
            f"Non-finite gradient in {slot.group}[{slot.layer}].{slot.part} at step {state.step + 1}"
        )
    step = state.step + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    updated = params.values - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params.with_values(updated), replace(state, step=step, first_moment=m, second_moment=v)


# ---------------------------------------------------------------------------
# Loss primitives
# ---------------------------------------------------------------------------


def _same_shape(*arrays: np.ndarray):
    shape = arrays[0].shape
    for arr in arrays[1:]:
        if arr.shape != shape:
            raise ShapeError(f"Shape mismatch: {shape} vs {arr.shape}")


def reparameterize(mu: np.ndarray, logvar: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """z = mu + exp(logvar / 2) * noise."""
    mu, logvar, noise = (np.asarray(a, dtype=np.float64) for a in (mu, logvar, noise))
    _same_shape(mu, logvar, noise)
    if not np.all(np.isfinite(logvar)):
        raise NonFiniteError("logvar must be finite")
    return mu + np.exp(0.5 * logvar) * noise


def reparameterize_backward(logvar: np.ndarray, noise: np.ndarray,
                            grad_z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of a loss w.r.t. (mu, logvar) given its gradient w.r.t. z."""
    return grad_z, grad_z * 0.5 * np.exp(0.5 * logvar) * noise


def kl_gaussian(mu: np.ndarray, logvar: np.ndarray) -> float:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over dims, averaged over the batch."""
    mu, logvar = np.asarray(mu, dtype=np.float64), np.asarray(logvar, dtype=np.float64)
    _same_shape(mu, logvar)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))):
        raise NonFiniteError("KL inputs must be finite")
    b = mu.shape[0]
    return float(0.5 * np.sum(np.exp(logvar) + mu * mu - 1.0 - logvar) / b)


def kl_gaussian_grad(mu: np.ndarray, logvar: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    b = mu.shape[0]
    return mu / b, 0.5 * (np.exp(logvar) - 1.0) / b


def squared_error(pred: np.ndarray, target: np.ndarray,
                  weights: np.ndarray = None) -> Tuple[float, np.ndarray]:
    """
    Batch mean of per-row (optionally weighted) summed squared error.

    Accepts b x k matrices or length-b vectors.
    """
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    _same_shape(pred, target)
    b = pred.shape[0]
    diff = pred - target
    if weights is None:
        row_weights = np.ones(b)
    else:
        row_weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if row_weights.shape[0] != b:
            raise ShapeError(f"Expected {b} weights, got {row_weights.shape[0]}")
    w = row_weights.reshape((b,) + (1,) * (diff.ndim - 1))
    value = float(np.sum(w * diff * diff) / b)
    return value, 2.0 * w * diff / b


def correlation_penalty(z: np.ndarray, tol: float = 1e-12) -> Tuple[float, np.ndarray]:
    """
    Sum over ordered pairs a != b of r(z_a, z_b)^2 with population moments.

    A column whose centered norm is below ``tol`` carries no correlation:
    its r is 0 and it receives no gradient.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"Expected a b x q matrix, got shape {z.shape}")
    centered = z - z.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    live = norms > tol
    safe = np.where(live, norms, 1.0)
    u = np.where(live, centered / safe, 0.0)
    r = u.T @ u
    np.fill_diagonal(r, 0.0)
    value = float(np.sum(r * r))

    grad_u = 4.0 * u @ r
    # project out the radial component of the column normalization
    radial = np.sum(grad_u * u, axis=0)
    grad_c = np.where(live, (grad_u - u * radial) / safe, 0.0)
    grad_z = grad_c - grad_c.mean(axis=0)
    return value, grad_z


def correlation_matrix(z: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Pearson correlation of the columns of z; constant columns give 0."""
    z = np.asarray(z, dtype=np.float64)
    centered = z - z.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    live = norms > tol
    u = np.where(live, centered / np.where(live, norms, 1.0), 0.0)
    return u.T @ u
