"""
Two-stage hyperparameter search scored by k-fold cross-validated MAE.

Stage 1 samples ``budget`` configurations uniformly from a discrete search
space. Stage 2 takes the two best stage-1 configurations and, for every
parameter, every listed value between their two choices (inclusive); the
product of those ranges is searched exhaustively, capped at ``grid_limit``
configurations (the stage-1 winner is always kept). The winner is the lowest
CV MAE over both stages; ties go to the configuration evaluated first.
"""

import itertools
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from django.core.exceptions import ValidationError

from core.seeding import stage_rng

from .catalog import base_config, fit_arrays

logger = logging.getLogger(__name__)

DEFAULT_GRID_LIMIT = 16

SEARCH_SPACES = {
    "mlp": {
        "learning_rate": [0.001, 0.003, 0.01, 0.03],
        "epochs": [250, 500, 1000],
    },
    "rf": {
        "n_estimators": [50, 100, 200, 400],
        "max_depth": [4, 6, 8, 12, 16],
        "min_samples_split": [2, 4, 8, 16],
        "max_features": [2, 4, 8, 15],
    },
    "gbdt": {
        "n_estimators": [100, 200, 300, 500],
        "max_depth": [2, 3, 4, 6],
        "shrinkage": [0.03, 0.05, 0.1, 0.2],
        "subsample": [0.6, 0.8, 1.0],
    },
}


def search_space_for(model_name: str) -> Dict[str, list]:
    family = "mlp" if model_name.startswith("mlp") else model_name
    try:
        return SEARCH_SPACES[family]
    except KeyError as exc:
        raise ValidationError(f"No search space for model {model_name}") from exc


@dataclass
class Evaluation:
    stage: int
    params: Dict[str, Any]
    cv_mae: float
    fold_maes: List[float]


@dataclass
class TuningReport:
    model_name: str
    label: str
    k_folds: int
    budget: int
    seed: int
    evaluations: List[Evaluation] = field(default_factory=list)
    best_params: Dict[str, Any] = field(default_factory=dict)
    best_cv_mae: float = float("inf")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def k_fold_indices(n_rows: int, k_folds: int, seed: int) -> List[np.ndarray]:
    """Shuffled, near-equal folds; deterministic given seed."""
    if k_folds < 2:
        raise ValidationError("k_folds must be at least 2")
    if n_rows < k_folds:
        raise ValidationError(f"Cannot split {n_rows} records into {k_folds} folds")
    order = stage_rng(seed, "folds").permutation(n_rows)
    return [np.sort(fold) for fold in np.array_split(order, k_folds)]


def cross_validate(model_name: str, config, x, y, folds) -> List[float]:
    maes = []
    all_rows = np.arange(len(y))
    for fold in folds:
        train = np.setdiff1d(all_rows, fold, assume_unique=True)
        model, _ = fit_arrays(model_name, config, x[train], y[train])
        predictions = model.predict(x[fold])
        maes.append(float(np.mean(np.abs(predictions - y[fold]))))
    return maes


def _check_space(space: Dict[str, Sequence]):
    if not space:
        raise ValidationError("Search space is empty")
    for name, values in space.items():
        if not isinstance(values, (list, tuple)) or not values:
            raise ValidationError(f"Search space entry {name} must be a non-empty list")


def _neighbourhood(space, first, second) -> Dict[str, list]:
    result = {}
    for name in sorted(space):
        values = list(space[name])
        a, b = values.index(first[name]), values.index(second[name])
        low, high = min(a, b), max(a, b)
        result[name] = values[low : high + 1]
    return result


def tune(
    model_name: str,
    dataset,
    label: str,
    search_space: Optional[Dict[str, Sequence]] = None,
    budget: int = 10,
    k_folds: int = 5,
    seed: int = 0,
    base=None,
    grid_limit: int = DEFAULT_GRID_LIMIT,
):
    """Best configuration for ``model_name`` on ``label``, plus the search record."""
    if budget < 1:
        raise ValidationError("budget must be at least 1")
    space = dict(search_space or search_space_for(model_name))
    _check_space(space)
    x, y = dataset.features(), dataset.labels(label)
    if len(y) == 0:
        raise ValidationError("Cannot tune on an empty dataset")
    base = base if base is not None else base_config(model_name, n_features=x.shape[1])
    folds = k_fold_indices(len(y), k_folds, seed)
    rng = stage_rng(seed, "tune")
    names = sorted(space)

    report = TuningReport(
        model_name=model_name, label=label, k_folds=k_folds, budget=budget, seed=seed
    )
    scores: Dict[tuple, float] = {}

    def evaluate(params, stage):
        key = tuple(params[name] for name in names)
        if key in scores:
            return
        maes = cross_validate(model_name, replace(base, **params), x, y, folds)
        score = float(np.mean(maes))
        scores[key] = score
        report.evaluations.append(Evaluation(stage, dict(params), score, maes))
        logger.info(f"{model_name}/{label} stage {stage} {params}: CV MAE {score:.6g}")

    for _ in range(budget):
        params = {name: space[name][int(rng.integers(len(space[name])))] for name in names}
        evaluate(params, 1)

    ranked = sorted(report.evaluations, key=lambda e: e.cv_mae)
    first = ranked[0].params
    second = ranked[1].params if len(ranked) > 1 else first
    neighbourhood = _neighbourhood(space, first, second)
    grid = [
        dict(zip(names, values))
        for values in itertools.product(*(neighbourhood[n] for n in names))
    ]
    if len(grid) > grid_limit:
        others = [params for params in grid if params != first]
        keep = rng.choice(len(others), size=grid_limit - 1, replace=False)
        grid = [first] + [others[i] for i in sorted(keep)]
    for params in grid:
        evaluate(params, 2)

    best = min(report.evaluations, key=lambda e: e.cv_mae)
    report.best_params = dict(best.params)
    report.best_cv_mae = best.cv_mae
    logger.info(f"Tuned {model_name}/{label}: {report.best_params} (CV MAE {best.cv_mae:.6g})")
    return replace(base, **report.best_params), report
