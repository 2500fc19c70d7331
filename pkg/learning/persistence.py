"""
JSON persistence of trained models.

Document layout: {"kind", "config", "parameters", "meta"}. Floats are
written by ``json`` in shortest round-trip form, so a loaded model predicts
bit-identically to the one that was saved.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from pnslearn import __version__

from .mlp import MlpConfig, MlpModel
from .trees import EnsembleKind, ForestModel, GbdtModel, RegressionTree, TreeEnsembleConfig

logger = logging.getLogger(__name__)

MODEL_FORMAT = "pnslearn-model/1"


def model_to_dict(model, meta: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    if isinstance(model, MlpModel):
        kind = "mlp"
        parameters = {
            "weights": [w.tolist() for w in model.weights],
            "biases": [b.tolist() for b in model.biases],
        }
    elif isinstance(model, ForestModel):
        kind = EnsembleKind.RANDOM_FOREST.value
        parameters = {"trees": [tree.to_dict() for tree in model.trees]}
    elif isinstance(model, GbdtModel):
        kind = EnsembleKind.GBDT.value
        parameters = {
            "init": model.init,
            "trees": [tree.to_dict() for tree in model.trees],
        }
    else:
        raise ValidationError(f"Cannot persist {type(model).__name__}")
    return {
        "format": MODEL_FORMAT,
        "kind": kind,
        "config": model.config.to_dict(),
        "parameters": parameters,
        "meta": {"version": __version__, **(meta or {})},
    }


def model_from_dict(data: Dict[str, Any]):
    try:
        kind, config, parameters = data["kind"], data["config"], data["parameters"]
    except KeyError as exc:
        raise ValidationError(f"Model document is missing {exc}") from exc
    if kind == "mlp":
        return MlpModel(
            weights=[np.array(w, dtype=np.float64) for w in parameters["weights"]],
            biases=[np.array(b, dtype=np.float64) for b in parameters["biases"]],
            config=MlpConfig.from_dict(config),
        )
    trees = [RegressionTree.from_dict(tree) for tree in parameters["trees"]]
    if kind == EnsembleKind.RANDOM_FOREST:
        return ForestModel(trees=trees, config=TreeEnsembleConfig.from_dict(config))
    if kind == EnsembleKind.GBDT:
        return GbdtModel(
            init=float(parameters["init"]),
            trees=trees,
            config=TreeEnsembleConfig.from_dict(config),
        )
    raise ValidationError(f"Unknown model kind: {kind}")


def save_model(model, path, meta: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model, meta), sort_keys=True) + "\n")
    logger.info(f"Saved {type(model).__name__} to {path}")
    return path


def load_model(path) -> Tuple[Any, Dict[str, Any]]:
    """(model, meta) from a model file. FileNotFoundError propagates."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not a model file: {exc}") from exc
    return model_from_dict(data), data.get("meta", {})
