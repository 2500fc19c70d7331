"""
Training and prediction stages.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError

from core.manifests import ManifestManager, file_digest
from core.seeding import derive_seed
from datagen.datasets import load_dataset
from informer.oracle import keys_to_features

from .catalog import check_model_name, config_from_overrides, fit_arrays
from .persistence import load_model, save_model
from .tuning import tune

logger = logging.getLogger(__name__)

MODELS_DIR = "models"
LABELS = ("lb", "ub")
FLOAT_FORMAT = "%.17g"


def model_stem(name: str, label: str) -> str:
    return f"{name}_{label}"


def check_label(label: str) -> str:
    if label not in LABELS:
        raise ValidationError(f"Unknown label {label}; choose lb or ub")
    return label


class TrainingService:
    """Fits one named model to one label of a run's dataset."""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.models_dir = self.output_dir / MODELS_DIR
        self.manifests = ManifestManager(self.output_dir)

    def model_path(self, name: str, label: str) -> Path:
        return self.models_dir / f"{model_stem(name, label)}.json"

    def report_path(self, name: str, label: str) -> Path:
        return self.models_dir / f"{model_stem(name, label)}.report.json"

    def train(
        self,
        name: str,
        label: str,
        dataset_path,
        seed: int,
        overrides: Optional[Dict[str, Any]] = None,
        tune_budget: int = 0,
        k_folds: int = 5,
        workers: int = 1,
        force: bool = False,
    ):
        """
        Train ``name`` on ``label``. The training seed depends only on the
        master seed and the label, so every model sees the same seed.
        """
        check_model_name(name)
        check_label(label)
        dataset = load_dataset(dataset_path)
        label_index = LABELS.index(label)
        train_seed = derive_seed(seed, "train", label_index)
        config = config_from_overrides(name, dataset.n_observed, train_seed, overrides)
        model_path, report_path = self.model_path(name, label), self.report_path(name, label)

        def produce():
            effective, tuning = config, None
            if tune_budget:
                effective, tuning = tune(
                    name,
                    dataset,
                    label,
                    budget=tune_budget,
                    k_folds=k_folds,
                    seed=derive_seed(seed, "tune", label_index),
                    base=config,
                )
            model, report = fit_arrays(
                name, effective, dataset.features(), dataset.labels(label), workers=workers
            )
            report.label = label
            logger.info(
                f"Trained {name} on {label}: train MSE {report.final_mse:.6g} "
                f"({report.wall_time:.1f}s)"
            )
            meta = {
                "model": name,
                "label": label,
                "seed": seed,
                "train_seed": train_seed,
                "dataset_hash": file_digest(dataset_path),
                "n_features": dataset.n_observed,
                "n_records": len(dataset),
            }
            save_model(model, model_path, meta)
            document = {"report": report.to_dict()}
            if tuning is not None:
                document["tuning"] = tuning.to_dict()
            report_path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
            return [model_path, report_path]

        manifest = self.manifests.run_stage(
            f"train_{model_stem(name, label)}",
            inputs={"dataset": dataset_path},
            config={
                "model": name,
                "label": label,
                "config": config.to_dict(),
                "tune_budget": tune_budget,
                "k_folds": k_folds,
            },
            seed=seed,
            produce=produce,
            force=force,
        )
        model, _ = load_model(model_path)
        return model, manifest


class PredictionService:
    """Writes ``key,prediction`` for every subpopulation or a dataset's keys."""

    def predict(self, model_path, out_path, dataset_path=None) -> Path:
        model, meta = load_model(model_path)
        if dataset_path:
            dataset = load_dataset(dataset_path)
            keys, features = dataset.keys(), dataset.features()
        else:
            n_features = int(meta.get("n_features", 0))
            if n_features < 1:
                raise ValidationError(f"{model_path} does not record its feature count")
            keys = np.arange(1 << n_features, dtype=np.int64)
            features = keys_to_features(keys, n_features).astype(np.float64)

        predictions = np.asarray(model.predict(features), dtype=np.float64)
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({"key": keys, "prediction": predictions}).to_csv(
            out_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )
        logger.info(f"Wrote {len(keys)} predictions to {out_path}")
        return out_path
