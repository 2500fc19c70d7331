"""
Error metrics, binned truth-vs-prediction matrices and subpopulation selection.

Sums use compensated summation so results do not depend on row order.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from django.core.exceptions import ValidationError

DEFAULT_BINS = 10


@dataclass(frozen=True)
class Metrics:
    mse: float
    mae: float
    n: int
    label: str = ""
    model_name: str = ""


def _pairs(predictions, labels):
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if len(p) != len(y):
        raise ValidationError(f"{len(p)} predictions for {len(y)} labels")
    if len(p) == 0:
        raise ValidationError("Cannot score an empty set of predictions")
    return p, y


def metrics(predictions, labels, label: str = "", model_name: str = "") -> Metrics:
    p, y = _pairs(predictions, labels)
    diff = p - y
    n = len(diff)
    return Metrics(
        mse=math.fsum(diff * diff) / n,
        mae=math.fsum(np.abs(diff)) / n,
        n=n,
        label=label,
        model_name=model_name,
    )


def population_predictions(model, informer_table) -> np.ndarray:
    """Predictions for every subpopulation, in key order."""
    informer_table.validate()
    return np.asarray(model.predict(informer_table.features()), dtype=np.float64)


def defined_population(informer_table, label: str, quantity: str = "PNS"):
    """Keys, exact labels and row mask of the subpopulations whose bound is defined."""
    truth = informer_table.labels(label, quantity)
    defined = np.isfinite(truth)
    return informer_table.keys[defined], truth[defined], defined


def full_population_eval(
    model,
    informer_table,
    label: str,
    model_name: str = "",
    quantity: str = "PNS",
    predictions=None,
) -> Metrics:
    """
    Score ``model`` against the exact bound of every subpopulation. PN and PS
    rows without a defined bound are left out.
    """
    if predictions is None:
        predictions = population_predictions(model, informer_table)
    _, truth, defined = defined_population(informer_table, label, quantity)
    return metrics(np.asarray(predictions)[defined], truth, label, model_name)


def train_set_eval(model, dataset, label: str, model_name: str = "") -> Metrics:
    """Score ``model`` on the estimated labels of the records it was trained on."""
    predictions = model.predict(dataset.features())
    return metrics(predictions, dataset.labels(label), label, model_name)


@dataclass
class BinnedMatrix:
    """``counts[true_bin, predicted_bin]`` over uniform bins on [0, 1]."""

    bins: int
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def normalized(self) -> np.ndarray:
        """Each row divided by its total; empty rows stay zero."""
        rows = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        return np.divide(
            self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0
        )


def bin_index(values, bins: int) -> np.ndarray:
    """Bin i covers [i/bins, (i+1)/bins); the last bin also holds 1.0."""
    values = np.asarray(values, dtype=np.float64)
    if np.any(~np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise ValidationError("Binned values must lie in [0, 1]")
    return np.minimum(np.floor(values * bins).astype(np.int64), bins - 1)


def binned_matrix(predictions, labels, bins: int = DEFAULT_BINS) -> BinnedMatrix:
    if bins < 1:
        raise ValidationError("bins must be at least 1")
    p, y = _pairs(predictions, labels)
    counts = np.zeros((bins, bins), dtype=np.int64)
    np.add.at(counts, (bin_index(y, bins), bin_index(p, bins)), 1)
    return BinnedMatrix(bins=bins, counts=counts)


def _selection_mask(lb, ub, min_lb: Optional[float], max_ub: Optional[float]) -> np.ndarray:
    if min_lb is None and max_ub is None:
        raise ValidationError("Give a minimum lower bound and/or a maximum upper bound")
    mask = np.ones(len(lb) if lb is not None else len(ub), dtype=bool)
    if min_lb is not None:
        if lb is None:
            raise ValidationError("Selecting on a minimum lower bound needs lower bounds")
        mask &= np.asarray(lb) >= min_lb
    if max_ub is not None:
        if ub is None:
            raise ValidationError("Selecting on a maximum upper bound needs upper bounds")
        mask &= np.asarray(ub) <= max_ub
    return mask


def select_subpopulations(
    keys,
    predicted_lb=None,
    predicted_ub=None,
    min_lb: Optional[float] = None,
    max_ub: Optional[float] = None,
) -> np.ndarray:
    """Keys whose predicted lower bound >= ``min_lb`` and/or upper bound <= ``max_ub``."""
    keys = np.asarray(keys)
    return keys[_selection_mask(predicted_lb, predicted_ub, min_lb, max_ub)]


@dataclass(frozen=True)
class SelectionAgreement:
    selected: int
    relevant: int
    true_positives: int
    precision: float
    recall: float


def selection_agreement(
    selected_keys,
    keys,
    true_lb=None,
    true_ub=None,
    min_lb: Optional[float] = None,
    max_ub: Optional[float] = None,
) -> SelectionAgreement:
    """Precision and recall of a selection against the same rule on exact bounds."""
    relevant = set(select_subpopulations(keys, true_lb, true_ub, min_lb, max_ub).tolist())
    selected = set(np.asarray(selected_keys).tolist())
    hits = len(selected & relevant)
    return SelectionAgreement(
        selected=len(selected),
        relevant=len(relevant),
        true_positives=hits,
        precision=hits / len(selected) if selected else float("nan"),
        recall=hits / len(relevant) if relevant else float("nan"),
    )
