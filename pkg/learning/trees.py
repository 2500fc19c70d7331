"""
Regression trees, random forests and gradient-boosted trees.

Splits minimise the summed squared error of the two children. A row goes
left when its feature value is <= the split threshold. Tree ``i`` of an
ensemble draws from a generator seeded with ``derive_seed(seed, "tree", i)``,
so trees can be fitted in any order or in parallel.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from core.seeding import stage_rng

from .mlp import TrainReport

logger = logging.getLogger(__name__)

LEAF = -1


class EnsembleKind(models.TextChoices):
    RANDOM_FOREST = "random_forest", "Random forest"
    GBDT = "gbdt", "Gradient boosted decision trees"


@dataclass(frozen=True)
class TreeEnsembleConfig:
    kind: str = EnsembleKind.RANDOM_FOREST
    n_estimators: int = 200
    max_depth: int = 12
    min_samples_split: int = 2
    # None considers every feature at each split
    max_features: Optional[int] = None
    shrinkage: float = 0.1
    subsample: float = 1.0
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", str(self.kind))

    @classmethod
    def random_forest(cls, n_features: int = 15, **overrides) -> "TreeEnsembleConfig":
        values = dict(
            kind=EnsembleKind.RANDOM_FOREST,
            n_estimators=200,
            max_depth=12,
            min_samples_split=2,
            max_features=math.ceil(math.sqrt(n_features)),
        )
        values.update(overrides)
        return cls(**values)

    @classmethod
    def gbdt(cls, **overrides) -> "TreeEnsembleConfig":
        values = dict(
            kind=EnsembleKind.GBDT,
            n_estimators=300,
            max_depth=3,
            min_samples_split=2,
            max_features=None,
            shrinkage=0.1,
            subsample=1.0,
        )
        values.update(overrides)
        return cls(**values)

    def validate(self):
        errors = []
        if self.kind not in EnsembleKind.values:
            errors.append(f"unknown ensemble kind {self.kind}")
        # boosting may run zero rounds; a forest needs a tree
        minimum = 0 if self.kind == EnsembleKind.GBDT else 1
        if self.n_estimators < minimum:
            errors.append(f"n_estimators must be at least {minimum}")
        if self.max_depth < 0:
            errors.append("max_depth must be non-negative")
        if self.min_samples_split < 2:
            errors.append("min_samples_split must be at least 2")
        if self.max_features is not None and self.max_features < 1:
            errors.append("max_features must be positive")
        if not 0.0 < self.shrinkage <= 1.0:
            errors.append("shrinkage must lie in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            errors.append("subsample must lie in (0, 1]")
        if errors:
            raise ValidationError(errors)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TreeEnsembleConfig":
        return cls(**data)


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature[i] == LEAF`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = {0: 0}
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[int(self.left[node])] = depths[node] + 1
                depths[int(self.right[node])] = depths[node] + 1
        return max(depths.values())

    def predict(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        node = np.zeros(len(x), dtype=np.int64)
        while True:
            split = self.feature[node]
            active = np.flatnonzero(split != LEAF)
            if len(active) == 0:
                return self.value[node]
            current = node[active]
            go_left = x[active, split[active]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])

    def to_dict(self) -> Dict[str, list]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "RegressionTree":
        return cls(
            feature=np.array(data["feature"], dtype=np.int64),
            threshold=np.array(data["threshold"], dtype=np.float64),
            left=np.array(data["left"], dtype=np.int64),
            right=np.array(data["right"], dtype=np.int64),
            value=np.array(data["value"], dtype=np.float64),
        )


def _best_split(x, y, features) -> Tuple[float, int, float]:
    """(gain, feature, threshold) of the best split on ``features``; gain <= 0 if none."""
    n = len(y)
    total = y.sum()
    parent_score = total * total / n
    best = (0.0, LEAF, 0.0)
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        xs, ys = x[order, f], y[order]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if len(valid) == 0:
            continue
        left_sum = np.cumsum(ys)[valid]
        n_left = valid + 1.0
        right_sum = total - left_sum
        n_right = n - n_left
        # SSE reduction = sum_l^2/n_l + sum_r^2/n_r - total^2/n
        score = left_sum * left_sum / n_left + right_sum * right_sum / n_right
        i = int(np.argmax(score))
        gain = float(score[i] - parent_score)
        if gain > best[0]:
            position = valid[i]
            best = (gain, int(f), float((xs[position] + xs[position + 1]) / 2.0))
    return best


def _candidate_features(x: np.ndarray, rows: np.ndarray, max_features, rng):
    """
    Features to scan at a node. With ``max_features`` set, features are
    visited in random order until that many non-constant ones are found.
    """
    n_features = x.shape[1]
    if max_features is None or max_features >= n_features:
        return range(n_features)
    chosen = []
    for f in rng.permutation(n_features):
        column = x[rows, f]
        if column.min() < column.max():
            chosen.append(int(f))
            if len(chosen) == max_features:
                break
    return chosen


def fit_tree(
    features,
    targets,
    max_depth: int,
    min_samples_split: int = 2,
    max_features: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> RegressionTree:
    """Grow one regression tree depth-first; nodes are numbered in creation order."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if len(y) == 0:
        raise ValidationError("Cannot fit a tree on no rows")
    rng = rng if rng is not None else np.random.default_rng(0)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[rows].mean()))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth or len(rows) < min_samples_split:
            continue
        if np.all(y[rows] == y[rows][0]):
            continue
        candidates = _candidate_features(x, rows, max_features, rng)
        gain, split, cut = _best_split(x[rows], y[rows], candidates)
        if split == LEAF or gain <= 0.0:
            continue
        goes_left = x[rows, split] <= cut
        left_rows, right_rows = rows[goes_left], rows[~goes_left]
        feature[node], threshold[node] = split, cut
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], right_rows, depth + 1))
        stack.append((left[node], left_rows, depth + 1))

    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
    )


def _check_training_data(x, y):
    if len(y) == 0:
        raise ValidationError("Cannot train on an empty dataset")
    if len(x) != len(y):
        raise ValidationError("Feature rows and labels differ in length")


@dataclass
class ForestModel:
    trees: List[RegressionTree]
    config: TreeEnsembleConfig

    def predict(self, features) -> np.ndarray:
        return rf_predict(self, features)


def _fit_forest_tree(x, y, config: TreeEnsembleConfig, index: int) -> RegressionTree:
    rng = stage_rng(config.seed, "tree", index)
    rows = rng.integers(0, len(y), len(y)) if config.bootstrap else np.arange(len(y))
    return fit_tree(
        x[rows],
        y[rows],
        config.max_depth,
        config.min_samples_split,
        config.max_features,
        rng,
    )


def rf_fit(features, labels, config: TreeEnsembleConfig, workers: int = 1):
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    _check_training_data(x, y)
    config.validate()
    if config.kind != EnsembleKind.RANDOM_FOREST:
        raise ValidationError(f"Expected a random forest config, got {config.kind}")

    started = time.perf_counter()
    indices = range(config.n_estimators)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trees = list(
                pool.map(
                    _fit_forest_tree,
                    [x] * config.n_estimators,
                    [y] * config.n_estimators,
                    [config] * config.n_estimators,
                    indices,
                )
            )
    else:
        trees = [_fit_forest_tree(x, y, config, i) for i in indices]

    model = ForestModel(trees=trees, config=config)
    diff = rf_predict(model, x) - y
    report = TrainReport(
        # one entry per tree: training MSE of the forest built so far
        losses=_forest_losses(trees, x, y),
        final_mse=float(np.mean(diff * diff)),
        final_mae=float(np.mean(np.abs(diff))),
        seed=config.seed,
        config=config.to_dict(),
        model_kind="rf",
        n_records=len(y),
        wall_time=time.perf_counter() - started,
    )
    return model, report


def _forest_losses(trees, x, y) -> List[float]:
    running = np.zeros(len(y))
    losses = []
    for count, tree in enumerate(trees, start=1):
        running += tree.predict(x)
        diff = np.clip(running / count, 0.0, 1.0) - y
        losses.append(float(np.mean(diff * diff)))
    return losses


def rf_train(dataset, label_column: str, config: TreeEnsembleConfig, workers: int = 1):
    model, report = rf_fit(dataset.features(), dataset.labels(label_column), config, workers)
    report.label = label_column
    logger.info(
        f"Trained random forest ({config.n_estimators} trees) on {label_column}: "
        f"train MSE {report.final_mse:.6g}"
    )
    return model, report


def rf_predict(model: ForestModel, features) -> np.ndarray:
    """Mean of the tree outputs, clamped to [0, 1]."""
    x = np.asarray(features, dtype=np.float64)
    total = np.zeros(len(x))
    for tree in model.trees:
        total += tree.predict(x)
    return np.clip(total / len(model.trees), 0.0, 1.0)


@dataclass
class GbdtModel:
    init: float
    trees: List[RegressionTree]
    config: TreeEnsembleConfig
    train_losses: List[float] = field(default_factory=list)

    def raw_predict(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        prediction = np.full(len(x), self.init)
        for tree in self.trees:
            prediction += self.config.shrinkage * tree.predict(x)
        return prediction

    def predict(self, features) -> np.ndarray:
        return gbdt_predict(self, features)


def gbdt_fit(features, labels, config: TreeEnsembleConfig):
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    _check_training_data(x, y)
    config.validate()
    if config.kind != EnsembleKind.GBDT:
        raise ValidationError(f"Expected a gbdt config, got {config.kind}")

    started = time.perf_counter()
    init = float(y.mean())
    prediction = np.full(len(y), init)
    trees, losses = [], []
    n_rows = max(1, int(round(config.subsample * len(y))))
    for round_index in range(config.n_estimators):
        rng = stage_rng(config.seed, "tree", round_index)
        if n_rows < len(y):
            rows = np.sort(rng.choice(len(y), size=n_rows, replace=False))
        else:
            rows = np.arange(len(y))
        residual = y - prediction
        tree = fit_tree(
            x[rows],
            residual[rows],
            config.max_depth,
            config.min_samples_split,
            config.max_features,
            rng,
        )
        prediction = prediction + config.shrinkage * tree.predict(x)
        trees.append(tree)
        diff = prediction - y
        losses.append(float(np.mean(diff * diff)))

    model = GbdtModel(init=init, trees=trees, config=config, train_losses=losses)
    diff = gbdt_predict(model, x) - y
    report = TrainReport(
        losses=losses,
        final_mse=float(np.mean(diff * diff)),
        final_mae=float(np.mean(np.abs(diff))),
        seed=config.seed,
        config=config.to_dict(),
        model_kind="gbdt",
        n_records=len(y),
        wall_time=time.perf_counter() - started,
    )
    return model, report


def gbdt_train(dataset, label_column: str, config: TreeEnsembleConfig):
    model, report = gbdt_fit(dataset.features(), dataset.labels(label_column), config)
    report.label = label_column
    logger.info(
        f"Trained GBDT ({config.n_estimators} rounds) on {label_column}: "
        f"train MSE {report.final_mse:.6g}"
    )
    return model, report


def gbdt_predict(model: GbdtModel, features) -> np.ndarray:
    """Boosted prediction clamped to [0, 1]."""
    return np.clip(model.raw_predict(features), 0.0, 1.0)
