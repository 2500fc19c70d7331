"""
Hidden-layer activations and their derivatives.

ReLU and LeakyReLU are not differentiable at 0; their derivative there is
taken as 0 and ``alpha`` respectively.
"""

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

DEFAULT_LEAKY_ALPHA = 0.01


class Activation(models.TextChoices):
    RELU = "relu", "ReLU"
    LEAKY_RELU = "leaky_relu", "LeakyReLU"
    MISH = "mish", "Mish"


def _out(value, like):
    return float(value) if np.ndim(like) == 0 else value


def relu(s):
    s = np.asarray(s, dtype=np.float64)
    return _out(np.maximum(s, 0.0), s)


def relu_derivative(s):
    s = np.asarray(s, dtype=np.float64)
    return _out((s > 0).astype(np.float64), s)


def leaky_relu(s, alpha: float = DEFAULT_LEAKY_ALPHA):
    s = np.asarray(s, dtype=np.float64)
    return _out(np.where(s < 0, alpha * s, s), s)


def leaky_relu_derivative(s, alpha: float = DEFAULT_LEAKY_ALPHA):
    s = np.asarray(s, dtype=np.float64)
    return _out(np.where(s > 0, 1.0, alpha), s)


def softplus(s):
    """ln(1 + e^s) without overflow."""
    s = np.asarray(s, dtype=np.float64)
    return _out(np.logaddexp(0.0, s), s)


def sigmoid(s):
    s = np.asarray(s, dtype=np.float64)
    e = np.exp(-np.abs(s))
    return _out(np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e)), s)


def mish(s):
    """s * tanh(softplus(s))."""
    s = np.asarray(s, dtype=np.float64)
    return _out(s * np.tanh(np.logaddexp(0.0, s)), s)


def mish_derivative(s):
    s = np.asarray(s, dtype=np.float64)
    t = np.tanh(np.logaddexp(0.0, s))
    return _out(t + s * (1.0 - t * t) * sigmoid(s), s)


def activation(kind: str, s, alpha: float = DEFAULT_LEAKY_ALPHA):
    kind = _kind(kind)
    if kind == Activation.RELU:
        return relu(s)
    if kind == Activation.LEAKY_RELU:
        return leaky_relu(s, alpha)
    return mish(s)


def activation_derivative(kind: str, s, alpha: float = DEFAULT_LEAKY_ALPHA):
    kind = _kind(kind)
    if kind == Activation.RELU:
        return relu_derivative(s)
    if kind == Activation.LEAKY_RELU:
        return leaky_relu_derivative(s, alpha)
    return mish_derivative(s)


def _kind(kind: str) -> Activation:
    try:
        return Activation(kind)
    except ValueError as exc:
        raise ValidationError(f"Unknown activation: {kind}") from exc
