"""
Labelled datasets built from experimental and observational counters.

A subpopulation enters the dataset when both regimes routed at least
``threshold`` samples to it and both experimental arms are non-empty. Its
label is the pair of bounds computed from the estimated distributions.
Records whose bounds cross (sampling noise) are kept with
``consistent = False``.
"""

import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError

from bounds.formulas import DistributionPair, Quantity, bounds_for
from core.exceptions import EstimationError, SpecMismatchError, UndefinedQuantityError
from informer.oracle import feature_columns, key_to_bits, features_to_keys
from pnslearn import __version__

from .sampling import (
    BLOCK_SIZE,
    GENERATOR_NAME,
    PRNG_NAME,
    SampleCounters,
    SampleRegime,
)

logger = logging.getLogger(__name__)

DATASET_VERSION = "pnslearn-dataset/1"
FLOAT_FORMAT = "%.17g"
DEFAULT_THRESHOLD = 1300

# Per-cell counts stored after the label columns so labels can be recomputed.
COUNT_COLUMNS = [
    "exp_x1y1",
    "exp_x1y0",
    "exp_x0y1",
    "exp_x0y0",
    "obs_x1y1",
    "obs_x1y0",
    "obs_x0y1",
    "obs_x0y0",
]
_CELL_ORDER = [(1, 1), (1, 0), (0, 1), (0, 0)]


def estimate_distributions_from_cells(exp_cells, obs_cells) -> DistributionPair:
    """``exp_cells`` and ``obs_cells`` are 2x2 count tables indexed [x][y]."""
    e = [[int(exp_cells[x][y]) for y in (0, 1)] for x in (0, 1)]
    o = [[int(obs_cells[x][y]) for y in (0, 1)] for x in (0, 1)]
    treated, untreated = e[1][0] + e[1][1], e[0][0] + e[0][1]
    if treated == 0 or untreated == 0:
        raise EstimationError("An experimental arm has no samples")
    total = o[0][0] + o[0][1] + o[1][0] + o[1][1]
    if total == 0:
        raise EstimationError("No observational samples")
    return DistributionPair(
        exp_y_given_do_x1=e[1][1] / treated,
        exp_y_given_do_x0=e[0][1] / untreated,
        obs_joint=tuple(tuple(o[x][y] / total for y in (0, 1)) for x in (0, 1)),
    )


def estimate_distributions(
    exp_counters: SampleCounters, obs_counters: SampleCounters, key: int
) -> DistributionPair:
    """Empirical distributions of one subpopulation; EstimationError if unusable."""
    return estimate_distributions_from_cells(
        exp_counters.counts[key], obs_counters.counts[key]
    )


def label_from_cells(exp_cells, obs_cells, quantity: str = Quantity.PNS):
    """(lb, ub, consistent) for one subpopulation; labels are clipped to [0, 1]."""
    bounds = bounds_for(quantity, estimate_distributions_from_cells(exp_cells, obs_cells))
    lb = min(max(bounds.lb, 0.0), 1.0)
    ub = min(max(bounds.ub, 0.0), 1.0)
    return lb, ub, bounds.consistent


@dataclass(frozen=True)
class LabeledRecord:
    key: int
    features: Tuple[int, ...]
    lb: float
    ub: float
    n_exp: int
    n_obs: int
    consistent: bool
    # exp x1y1, x1y0, x0y1, x0y0, then obs in the same order
    counts: Tuple[int, ...] = ()

    def label(self, name: str) -> float:
        if name == "lb":
            return self.lb
        if name == "ub":
            return self.ub
        raise ValidationError(f"Unknown label: {name}")

    def cell_tables(self):
        exp = [[0, 0], [0, 0]]
        obs = [[0, 0], [0, 0]]
        for i, (x, y) in enumerate(_CELL_ORDER):
            exp[x][y] = self.counts[i]
            obs[x][y] = self.counts[4 + i]
        return exp, obs


@dataclass
class Dataset:
    records: List[LabeledRecord]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        keys = [record.key for record in self.records]
        if len(set(keys)) != len(keys):
            raise ValidationError("Dataset contains duplicate subpopulation keys")

    def __len__(self):
        return len(self.records)

    @property
    def n_observed(self) -> int:
        if self.records:
            return len(self.records[0].features)
        return int(self.meta.get("n_observed", 0))

    def keys(self) -> np.ndarray:
        return np.array([record.key for record in self.records], dtype=np.int64)

    def features(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.n_observed))
        return np.array([record.features for record in self.records], dtype=np.float64)

    def labels(self, name: str) -> np.ndarray:
        return np.array([record.label(name) for record in self.records], dtype=np.float64)

    def to_frame(self) -> pd.DataFrame:
        columns = feature_columns(self.n_observed)
        rows = [
            [
                *record.features,
                record.lb,
                record.ub,
                record.n_exp,
                record.n_obs,
                int(record.consistent),
                *record.counts,
            ]
            for record in self.records
        ]
        return pd.DataFrame(
            rows,
            columns=[*columns, "lb", "ub", "n_exp", "n_obs", "consistent", *COUNT_COLUMNS],
        )

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.to_frame().to_csv(
            buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )
        return buffer.getvalue()

    def digest(self) -> str:
        """SHA-256 of the CSV form; equals the digest of the saved file."""
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(records=[self.records[i] for i in indices], meta=dict(self.meta))


def _check_pair(exp_counters: SampleCounters, obs_counters: SampleCounters):
    if exp_counters.regime != SampleRegime.EXPERIMENTAL:
        raise ValidationError(f"Expected experimental counters, got {exp_counters.regime}")
    if obs_counters.regime != SampleRegime.OBSERVATIONAL:
        raise ValidationError(f"Expected observational counters, got {obs_counters.regime}")
    if exp_counters.spec_hash != obs_counters.spec_hash:
        raise SpecMismatchError("Experimental and observational counters come from different SCMs")
    if exp_counters.n_keys != obs_counters.n_keys:
        raise SpecMismatchError("Counters cover different numbers of subpopulations")


def build_dataset(
    exp_counters: SampleCounters,
    obs_counters: SampleCounters,
    threshold: int = DEFAULT_THRESHOLD,
    quantity: str = Quantity.PNS,
) -> Dataset:
    """Filter subpopulations by sample count and label them with estimated bounds."""
    if int(threshold) < 1:
        raise ValidationError(f"threshold must be at least 1, got {threshold}")
    quantity = Quantity(str(quantity).upper())
    _check_pair(exp_counters, obs_counters)

    n_observed = int(exp_counters.n_keys).bit_length() - 1
    exp_totals, obs_totals = exp_counters.totals(), obs_counters.totals()
    eligible = np.flatnonzero((exp_totals >= threshold) & (obs_totals >= threshold))

    records = []
    skipped = {"estimation": 0, "undefined": 0}
    for key in eligible:
        key = int(key)
        exp_cells, obs_cells = exp_counters.counts[key], obs_counters.counts[key]
        try:
            lb, ub, consistent = label_from_cells(exp_cells, obs_cells, quantity)
        except EstimationError:
            skipped["estimation"] += 1
            continue
        except UndefinedQuantityError:
            skipped["undefined"] += 1
            continue
        counts = tuple(int(exp_cells[x][y]) for x, y in _CELL_ORDER) + tuple(
            int(obs_cells[x][y]) for x, y in _CELL_ORDER
        )
        records.append(
            LabeledRecord(
                key=key,
                features=key_to_bits(key, n_observed),
                lb=lb,
                ub=ub,
                n_exp=int(exp_totals[key]),
                n_obs=int(obs_totals[key]),
                consistent=consistent,
                counts=counts,
            )
        )

    inconsistent = sum(not record.consistent for record in records)
    if skipped["estimation"] or skipped["undefined"]:
        logger.warning(
            f"Skipped {skipped['estimation']} subpopulations with an empty arm and "
            f"{skipped['undefined']} with an undefined {quantity.value}"
        )
    if inconsistent:
        logger.warning(f"{inconsistent} records have crossing bounds (kept, flagged)")
    logger.info(
        f"Built {quantity.value} dataset: {len(records)} of {exp_counters.n_keys} "
        f"subpopulations pass threshold {threshold}"
    )

    meta = {
        "spec_hash": exp_counters.spec_hash,
        "n_observed": n_observed,
        "quantity": quantity.value,
        "threshold": int(threshold),
        "seed_exp": exp_counters.seed,
        "seed_obs": obs_counters.seed,
        "n_exp_total": exp_counters.n_samples,
        "n_obs_total": obs_counters.n_samples,
        "records": len(records),
        "inconsistent": inconsistent,
        "skipped": skipped,
        "generator": GENERATOR_NAME,
        "prng": PRNG_NAME,
        "block_size": BLOCK_SIZE,
        "dataset_version": DATASET_VERSION,
        "version": __version__,
    }
    return Dataset(records=records, meta=meta)


def dataset_meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_dataset(dataset: Dataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dataset.to_csv())
    dataset_meta_path(path).write_text(
        json.dumps(dataset.meta, indent=2, sort_keys=True) + "\n"
    )
    logger.info(f"Wrote dataset ({len(dataset)} records) to {path}")
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta_file = dataset_meta_path(path)
    if not meta_file.exists():
        raise FileNotFoundError(2, "Dataset sidecar missing", str(meta_file))
    meta = json.loads(meta_file.read_text())
    n_observed = int(meta["n_observed"])
    columns = feature_columns(n_observed)
    frame = pd.read_csv(path, float_precision="round_trip")
    expected = [*columns, "lb", "ub", "n_exp", "n_obs", "consistent", *COUNT_COLUMNS]
    if list(frame.columns) != expected:
        raise ValidationError(f"{path} does not have the dataset column layout")

    features = frame[columns].to_numpy(dtype=np.int64)
    keys = features_to_keys(features) if len(frame) else np.zeros(0, dtype=np.int64)
    records = [
        LabeledRecord(
            key=int(keys[i]),
            features=tuple(int(b) for b in features[i]),
            lb=float(row.lb),
            ub=float(row.ub),
            n_exp=int(row.n_exp),
            n_obs=int(row.n_obs),
            consistent=bool(row.consistent),
            counts=tuple(int(getattr(row, name)) for name in COUNT_COLUMNS),
        )
        for i, row in enumerate(frame.itertuples(index=False))
    ]
    return Dataset(records=records, meta=meta)
