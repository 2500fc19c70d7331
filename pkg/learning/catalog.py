"""
The regressors a run can train, by name.
"""

from dataclasses import replace

from django.core.exceptions import ValidationError

from .activations import Activation
from .mlp import MlpConfig, mlp_fit
from .trees import EnsembleKind, TreeEnsembleConfig, gbdt_fit, rf_fit

MODEL_NAMES = ["mlp_relu", "mlp_leaky_relu", "mlp_mish", "rf", "gbdt"]

DISPLAY_NAMES = {
    "mlp_relu": "MLP(ReLU)",
    "mlp_leaky_relu": "MLP(LeakyReLU)",
    "mlp_mish": "MLP(Mish)",
    "rf": "RF",
    "gbdt": "GBDT",
}


def check_model_name(name: str) -> str:
    if name not in MODEL_NAMES:
        raise ValidationError(f"Unknown model {name}; choose from {', '.join(MODEL_NAMES)}")
    return name


def mlp_name(activation: str) -> str:
    return f"mlp_{Activation(activation).value}"


def base_config(name: str, n_features: int = 15, seed: int = 0):
    """Default configuration of a named model."""
    check_model_name(name)
    if name.startswith("mlp_"):
        sizes = (n_features, 64, 32, 16, 1)
        return MlpConfig(layer_sizes=sizes, hidden_activation=name[4:], seed=seed)
    if name == "rf":
        return TreeEnsembleConfig.random_forest(n_features=n_features, seed=seed)
    return TreeEnsembleConfig.gbdt(seed=seed)


def config_from_overrides(name: str, n_features: int, seed: int, overrides=None):
    """
    Default config with ``overrides`` applied. For MLPs, ``hidden_sizes``
    sets the hidden layers between the feature and output layers.
    """
    config = base_config(name, n_features=n_features, seed=seed)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    hidden = overrides.pop("hidden_sizes", None)
    if hidden is not None:
        if not isinstance(config, MlpConfig):
            raise ValidationError(f"hidden_sizes applies to MLPs only, not {name}")
        overrides["layer_sizes"] = (n_features, *hidden, 1)
    try:
        config = replace(config, **overrides)
    except TypeError as exc:
        raise ValidationError(f"Invalid setting for {name}: {exc}") from exc
    if isinstance(config, MlpConfig):
        config.validate(n_features=n_features)
    else:
        config.validate()
    return config


def fit_arrays(name: str, config, features, labels, workers: int = 1):
    """(model, TrainReport) for a named model on raw arrays."""
    check_model_name(name)
    if isinstance(config, MlpConfig):
        return mlp_fit(features, labels, config)
    if config.kind == EnsembleKind.RANDOM_FOREST:
        return rf_fit(features, labels, config, workers=workers)
    return gbdt_fit(features, labels, config)
