"""
Evaluation stage: score trained models on every subpopulation and write reports.
"""

import logging
from pathlib import Path
from typing import Iterable, List, Optional

from core.exceptions import SpecMismatchError
from core.manifests import ManifestManager
from datagen.datasets import load_dataset
from datagen.services import DATASET_FILE
from informer.services import INFORMER_FILE
from informer.tables import load_informer
from learning.catalog import DISPLAY_NAMES, MODEL_NAMES, check_model_name
from learning.persistence import load_model
from learning.services import LABELS, MODELS_DIR, check_label, model_stem

from .metrics import (
    DEFAULT_BINS,
    defined_population,
    full_population_eval,
    population_predictions,
    train_set_eval,
)
from .reports import ModelEvaluation, emit_report

logger = logging.getLogger(__name__)


class EvaluationService:
    """Compares every trained model of a run against the informer table."""

    stage = "eval"

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.manifests = ManifestManager(self.output_dir)

    def model_path(self, name: str, label: str) -> Path:
        return self.output_dir / MODELS_DIR / f"{model_stem(name, label)}.json"

    def available_models(self, labels: Iterable[str] = LABELS) -> List[str]:
        return [
            name
            for name in MODEL_NAMES
            if any(self.model_path(name, label).exists() for label in labels)
        ]

    def evaluate(self, informer, dataset, name: str, label: str) -> Optional[ModelEvaluation]:
        path = self.model_path(name, label)
        if not path.exists():
            logger.warning(f"No {label} model for {name} at {path}; skipping")
            return None
        model, meta = load_model(path)
        if meta.get("n_features") not in (None, informer.n_observed):
            raise SpecMismatchError(
                f"{path} was trained on {meta['n_features']} features, "
                f"the informer has {informer.n_observed}"
            )
        quantity = dataset.meta.get("quantity", "PNS")
        predictions = population_predictions(model, informer)
        keys, truth, defined = defined_population(informer, label, quantity)
        if not defined.all():
            logger.info(
                f"{int((~defined).sum())} subpopulations have no {quantity} {label}; "
                f"scoring {int(defined.sum())}"
            )
        scored = full_population_eval(
            model, informer, label, name, quantity=quantity, predictions=predictions
        )
        return ModelEvaluation(
            model_name=name,
            display_name=DISPLAY_NAMES[name],
            label=label,
            keys=keys,
            truth=truth,
            predictions=predictions[defined],
            metrics=scored,
            train_metrics=train_set_eval(model, dataset, label, name) if len(dataset) else None,
        )

    def run(
        self,
        models: Optional[List[str]] = None,
        labels: Iterable[str] = LABELS,
        informer_path=None,
        dataset_path=None,
        bins: int = DEFAULT_BINS,
        svg: bool = True,
        select_min_lb: Optional[float] = None,
        select_max_ub: Optional[float] = None,
        force: bool = False,
    ):
        """Evaluate ``models`` (default: every trained model) and emit the reports."""
        labels = [check_label(label) for label in labels]
        informer_path = Path(informer_path or self.output_dir / INFORMER_FILE)
        dataset_path = Path(dataset_path or self.output_dir / DATASET_FILE)
        models = [check_model_name(name) for name in (models or self.available_models(labels))]

        inputs = {"informer": informer_path, "dataset": dataset_path}
        for name in models:
            for label in labels:
                path = self.model_path(name, label)
                if path.exists():
                    inputs[f"model_{model_stem(name, label)}"] = path

        def produce():
            informer = load_informer(informer_path)
            dataset = load_dataset(dataset_path)
            spec_hash = dataset.meta.get("spec_hash")
            if spec_hash and spec_hash != informer.spec_hash:
                raise SpecMismatchError(
                    f"{dataset_path} and {informer_path} come from different SCMs"
                )
            evaluations = []
            for name in models:
                for label in labels:
                    evaluation = self.evaluate(informer, dataset, name, label)
                    if evaluation is None:
                        continue
                    logger.info(
                        f"{evaluation.display_name} {label}: MSE {evaluation.metrics.mse:.6g} "
                        f"MAE {evaluation.metrics.mae:.6g}"
                    )
                    evaluations.append(evaluation)
            return emit_report(
                evaluations,
                self.output_dir,
                bins=bins,
                svg=svg,
                select_min_lb=select_min_lb,
                select_max_ub=select_max_ub,
            )

        return self.manifests.run_stage(
            self.stage,
            inputs=inputs,
            config={
                "models": models,
                "labels": labels,
                "bins": int(bins),
                "svg": bool(svg),
                "select_min_lb": select_min_lb,
                "select_max_ub": select_max_ub,
            },
            seed=None,
            produce=produce,
            force=force,
        )
