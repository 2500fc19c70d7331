"""
Multilayer perceptron regressor trained with Adam on mean squared error.

Hidden layers use the configured activation, the output layer the logistic
sigmoid, so predictions stay in [0, 1]. Weight matrices are stored as
(fan_out, fan_in).
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from core.seeding import stage_rng

from .activations import DEFAULT_LEAKY_ALPHA, Activation, activation, activation_derivative, sigmoid

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass(frozen=True)
class MlpConfig:
    layer_sizes: Tuple[int, ...] = (15, 64, 32, 16, 1)
    hidden_activation: str = Activation.MISH
    leaky_alpha: float = DEFAULT_LEAKY_ALPHA
    learning_rate: float = 0.01
    epochs: int = 1000
    # None trains full-batch
    batch_size: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        object.__setattr__(self, "hidden_activation", str(self.hidden_activation))

    def validate(self, n_features: Optional[int] = None):
        errors = []
        if len(self.layer_sizes) < 2 or any(n < 1 for n in self.layer_sizes):
            errors.append("layer_sizes needs at least two positive sizes")
        elif self.layer_sizes[-1] != 1:
            errors.append("the output layer must have size 1")
        if n_features is not None and self.layer_sizes and self.layer_sizes[0] != n_features:
            errors.append(
                f"input layer size {self.layer_sizes[0]} does not match {n_features} features"
            )
        if self.hidden_activation not in Activation.values:
            errors.append(f"unknown activation {self.hidden_activation}")
        if self.epochs < 1:
            errors.append("epochs must be at least 1")
        if not self.learning_rate > 0:
            errors.append("learning_rate must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            errors.append("batch_size must be positive")
        if errors:
            raise ValidationError(errors)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["layer_sizes"] = list(self.layer_sizes)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MlpConfig":
        return cls(**data)


@dataclass
class MlpModel:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    config: MlpConfig

    def parameters(self) -> List[np.ndarray]:
        """Weights and biases interleaved: [W0, b0, W1, b1, ...]."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def with_parameters(self, params: Sequence[np.ndarray]) -> "MlpModel":
        return MlpModel(
            weights=list(params[0::2]), biases=list(params[1::2]), config=self.config
        )

    def predict(self, features) -> np.ndarray:
        return mlp_forward(self, features)


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON

    @classmethod
    def fresh(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p, dtype=np.float64) for p in params],
            v=[np.zeros_like(p, dtype=np.float64) for p in params],
        )


@dataclass
class TrainReport:
    losses: List[float]
    final_mse: float
    final_mae: float
    seed: int
    config: Dict[str, Any]
    model_kind: str = ""
    label: str = ""
    n_records: int = 0
    wall_time: float = 0.0
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        data = asdict(self)
        if not include_timing:
            data.pop("wall_time")
        return data


def mlp_init(config: MlpConfig) -> MlpModel:
    """Weights uniform on +-sqrt(6 / fan_in), biases zero."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(config.layer_sizes[:-1], config.layer_sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases, config=config)


def _as_batch(model: MlpModel, features) -> Tuple[np.ndarray, bool]:
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.weights[0].shape[1]:
        raise ValidationError(
            f"Expected {model.weights[0].shape[1]} features, got shape {np.shape(features)}"
        )
    return x, single


def _forward(model: MlpModel, x: np.ndarray):
    """Pre-activations and activations of every layer."""
    config = model.config
    activations = [x]
    pre_activations = []
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        s = activations[-1] @ w.T + b
        pre_activations.append(s)
        if i == last:
            activations.append(sigmoid(s))
        else:
            activations.append(activation(config.hidden_activation, s, config.leaky_alpha))
    return pre_activations, activations


def mlp_forward(model: MlpModel, features):
    """Predictions in [0, 1]; a single feature vector gives a float."""
    x, single = _as_batch(model, features)
    _, activations = _forward(model, x)
    out = activations[-1][:, 0]
    return float(out[0]) if single else out


def mse_loss(model: MlpModel, features, labels) -> float:
    x, _ = _as_batch(model, features)
    diff = mlp_forward(model, x) - np.asarray(labels, dtype=np.float64)
    return float(np.mean(diff * diff))


def loss_and_gradients(model: MlpModel, features, labels):
    """Mean squared error and its gradient for every entry of ``parameters()``."""
    x, _ = _as_batch(model, features)
    y = np.asarray(labels, dtype=np.float64)
    config = model.config
    pre_activations, activations = _forward(model, x)
    out = activations[-1][:, 0]
    diff = out - y
    loss = float(np.mean(diff * diff))

    # d loss / d output pre-activation, shape (n, 1)
    delta = (2.0 * diff / len(y) * out * (1.0 - out))[:, None]
    grads: List[np.ndarray] = [None] * (2 * len(model.weights))
    for i in range(len(model.weights) - 1, -1, -1):
        grads[2 * i] = delta.T @ activations[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            upstream = delta @ model.weights[i]
            delta = upstream * activation_derivative(
                config.hidden_activation, pre_activations[i - 1], config.leaky_alpha
            )
    return loss, grads


def adam_step(
    state: AdamState,
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    lr: float,
):
    """One bias-corrected Adam update; returns (new params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValidationError("params, grads and optimiser state must align")
    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if np.shape(p) != g.shape:
            raise ValidationError(f"Gradient {i} has shape {g.shape}, expected {np.shape(p)}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        updated.append(p - lr * m_hat / (np.sqrt(v_hat) + state.epsilon))
    return updated, state


def mlp_fit(features, labels, config: MlpConfig) -> Tuple[MlpModel, TrainReport]:
    """Train on arrays; see ``mlp_train`` for the dataset entry point."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if len(y) == 0:
        raise ValidationError("Cannot train on an empty dataset")
    if np.any(y < 0.0) or np.any(y > 1.0):
        raise ValidationError("Labels must lie in [0, 1]")
    config.validate(n_features=x.shape[1])

    started = time.perf_counter()
    model = mlp_init(config)
    params = model.parameters()
    state = AdamState.fresh(params)
    batch_rng = stage_rng(config.seed, "minibatch") if config.batch_size else None
    losses = []

    for epoch in range(config.epochs):
        if batch_rng is None:
            loss, grads = loss_and_gradients(model, x, y)
            params, state = adam_step(state, params, grads, config.learning_rate)
            model = model.with_parameters(params)
        else:
            order = batch_rng.permutation(len(y))
            weighted = 0.0
            for start in range(0, len(y), config.batch_size):
                batch = order[start : start + config.batch_size]
                batch_loss, grads = loss_and_gradients(model, x[batch], y[batch])
                params, state = adam_step(state, params, grads, config.learning_rate)
                model = model.with_parameters(params)
                weighted += batch_loss * len(batch)
            loss = weighted / len(y)
        losses.append(loss)
        if (epoch + 1) % 250 == 0:
            logger.debug(f"epoch {epoch + 1}/{config.epochs}: loss {loss:.6g}")

    predictions = mlp_forward(model, x)
    diff = predictions - y
    report = TrainReport(
        losses=losses,
        final_mse=float(np.mean(diff * diff)),
        final_mae=float(np.mean(np.abs(diff))),
        seed=config.seed,
        config=config.to_dict(),
        model_kind=f"mlp_{config.hidden_activation}",
        n_records=len(y),
        wall_time=time.perf_counter() - started,
    )
    return model, report


def mlp_train(dataset, label_column: str, config: MlpConfig):
    """Fit one MLP to the ``lb`` or ``ub`` labels of a dataset."""
    if len(dataset) == 0:
        raise ValidationError("Cannot train on an empty dataset")
    model, report = mlp_fit(dataset.features(), dataset.labels(label_column), config)
    report.label = label_column
    logger.info(
        f"Trained {report.model_kind} on {label_column}: train MSE {report.final_mse:.6g} "
        f"after {config.epochs} epochs ({report.wall_time:.1f}s)"
    )
    return model, report
