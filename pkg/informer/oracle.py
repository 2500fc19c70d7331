"""
Exact ground truth computed from an SCM.

A cell is a full assignment of all features. A subpopulation is an
assignment of the observable features only; its quantities are the
pz-weighted average over every completion of the unobserved ones.

Key layout: a subpopulation key packs the observable features with z1 as the
least significant bit. Completions of the unobserved features are listed as
a big-endian counter, so completion 0 sets them all to 0 and the last sets
them all to 1, with the first unobserved feature as the most significant bit.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from django.conf import settings
from django.core.exceptions import ValidationError

from bounds.formulas import (
    CausationBounds,
    DistributionPair,
    pn_bounds,
    pns_bounds,
    ps_bounds,
)
from core.exceptions import ResourceBudgetError, UndefinedQuantityError
from scm.mechanism import eval_fx, eval_fy
from scm.spec import ScmSpec

logger = logging.getLogger(__name__)

CHUNK_KEYS = 1024
MAX_COMPLETIONS = 1 << 16

DISTRIBUTION_COLUMNS = [
    "p_y_do_x1",
    "p_y_do_x0",
    "p_x1y1",
    "p_x1y0",
    "p_x0y1",
    "p_x0y0",
    "pns",
    "lb",
    "ub",
    "pn_lb",
    "pn_ub",
    "ps_lb",
    "ps_ub",
]

QUANTITY_PREFIXES = {"PNS": "", "PN": "pn_", "PS": "ps_"}


def feature_columns(n_observed: int):
    return [f"z{i + 1}" for i in range(n_observed)]


def key_to_bits(key: int, n_observed: int) -> Tuple[int, ...]:
    if not 0 <= key < (1 << n_observed):
        raise ValidationError(f"Key {key} out of range for {n_observed} features")
    return tuple((key >> i) & 1 for i in range(n_observed))


def bits_to_key(bits: Sequence[int]) -> int:
    key = 0
    for i, bit in enumerate(bits):
        if bit not in (0, 1):
            raise ValidationError(f"Feature bits must be 0 or 1, got {bit!r}")
        key |= int(bit) << i
    return key


def keys_to_features(keys: np.ndarray, n_observed: int) -> np.ndarray:
    """(len(keys), n_observed) int8 matrix of observable features."""
    keys = np.asarray(keys, dtype=np.int64)
    shifts = np.arange(n_observed, dtype=np.int64)
    return ((keys[:, None] >> shifts) & 1).astype(np.int8)


def features_to_keys(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.int64)
    weights = np.left_shift(1, np.arange(features.shape[1], dtype=np.int64))
    return features @ weights


def completions(spec: ScmSpec) -> np.ndarray:
    """(2**n_unobserved, n_unobserved) int8 matrix in big-endian counter order."""
    u = spec.n_unobserved
    if (1 << u) > MAX_COMPLETIONS:
        raise ResourceBudgetError(
            f"{u} unobserved features give {1 << u} completions per subpopulation; "
            f"limit is {MAX_COMPLETIONS}"
        )
    counter = np.arange(1 << u, dtype=np.int64)
    shifts = np.arange(u - 1, -1, -1, dtype=np.int64)
    return ((counter[:, None] >> shifts) & 1).astype(np.int8)


def completion_weights(spec: ScmSpec) -> np.ndarray:
    """Probability of each completion; sums to 1."""
    bits = completions(spec)
    pz = spec.pz[spec.n_observed :]
    factors = np.where(bits == 1, pz, 1.0 - pz)
    return np.prod(factors, axis=1) if bits.shape[1] else np.ones(1)


@dataclass(frozen=True)
class CellDistributions:
    """Exact distributions for one cell or subpopulation; ``joint`` is [x][y]."""

    p_y_do_x1: float
    p_y_do_x0: float
    joint: Tuple[Tuple[float, float], Tuple[float, float]]
    pns: float

    def distribution_pair(self) -> DistributionPair:
        return DistributionPair(
            exp_y_given_do_x1=self.p_y_do_x1,
            exp_y_given_do_x0=self.p_y_do_x0,
            obs_joint=self.joint,
        )


def _cell_arrays(spec: ScmSpec, z: np.ndarray) -> Dict[str, np.ndarray]:
    """Per-row exact quantities for a (rows, n_features) matrix of cells."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != spec.n_features:
        raise ValidationError(
            f"Cells must have {spec.n_features} features, got shape {z.shape}"
        )
    mx = z @ spec.mx_coeffs
    my = z @ spec.my_coeffs
    p_uy = (1.0 - spec.p_uy, spec.p_uy)
    p_ux = (1.0 - spec.p_ux, spec.p_ux)

    # fy[x][u_y] and fx[u_x], each a 0/1 vector over rows
    fy = [
        [
            eval_fy(x, my, u, spec.c_y, spec.fy_upper_branch).astype(np.float64)
            for u in (0, 1)
        ]
        for x in (0, 1)
    ]
    fx = [eval_fx(mx, u).astype(np.int8) for u in (0, 1)]

    experimental = [p_uy[0] * fy[x][0] + p_uy[1] * fy[x][1] for x in (0, 1)]
    responds = [(fy[0][u] == 0) & (fy[1][u] == 1) for u in (0, 1)]
    pns = p_uy[0] * responds[0] + p_uy[1] * responds[1]

    joint = np.zeros((len(mx), 2, 2))
    for u_x in (0, 1):
        for u_y in (0, 1):
            weight = p_ux[u_x] * p_uy[u_y]
            for x in (0, 1):
                takes_x = fx[u_x] == x
                y = fy[x][u_y]
                joint[:, x, 1] += weight * (takes_x & (y == 1))
                joint[:, x, 0] += weight * (takes_x & (y == 0))

    return {
        "p_y_do_x1": experimental[1],
        "p_y_do_x0": experimental[0],
        "joint": joint,
        "pns": pns,
    }


def _single_cell(spec: ScmSpec, z) -> Dict[str, np.ndarray]:
    z = np.asarray(z)
    if z.ndim != 1:
        raise ValidationError("A cell is a single feature vector")
    return _cell_arrays(spec, z[None, :])


def cell_pns(spec: ScmSpec, z) -> float:
    """P(y_x, y'_x') within a cell: units that respond to X in the positive direction."""
    return float(_single_cell(spec, z)["pns"][0])


def cell_experimental(spec: ScmSpec, z, x: int) -> float:
    """P(Y=1 | do(X=x), z)."""
    if x not in (0, 1):
        raise ValidationError(f"x must be 0 or 1, got {x!r}")
    arrays = _single_cell(spec, z)
    return float(arrays["p_y_do_x1" if x else "p_y_do_x0"][0])


def cell_observational_joint(spec: ScmSpec, z) -> np.ndarray:
    """P(X=x, Y=y | z) as a 2x2 array indexed [x][y]."""
    return _single_cell(spec, z)["joint"][0]


def cell_distributions(spec: ScmSpec, z) -> CellDistributions:
    arrays = _single_cell(spec, z)
    return _distributions_at(arrays, 0)


def _distributions_at(arrays, row) -> CellDistributions:
    joint = arrays["joint"][row]
    return CellDistributions(
        p_y_do_x1=float(arrays["p_y_do_x1"][row]),
        p_y_do_x0=float(arrays["p_y_do_x0"][row]),
        joint=(
            (float(joint[0, 0]), float(joint[0, 1])),
            (float(joint[1, 0]), float(joint[1, 1])),
        ),
        pns=float(arrays["pns"][row]),
    )


def full_cells(spec: ScmSpec, keys: np.ndarray) -> np.ndarray:
    """Every completion of every key: (len(keys) * n_completions, n_features)."""
    observed = keys_to_features(keys, spec.n_observed)
    hidden = completions(spec)
    n_keys, n_completions = len(observed), len(hidden)
    cells = np.empty((n_keys, n_completions, spec.n_features), dtype=np.int8)
    cells[:, :, : spec.n_observed] = observed[:, None, :]
    cells[:, :, spec.n_observed :] = hidden[None, :, :]
    return cells.reshape(n_keys * n_completions, spec.n_features)


def subpop_marginalize(spec: ScmSpec, key: int, cell_fn: Callable):
    """
    Sum of ``cell_fn(cell)`` over the completions of ``key``, weighted by
    the probability of each completion. ``cell_fn`` may return a scalar or
    an array.
    """
    cells = full_cells(spec, np.array([key]))
    weights = completion_weights(spec)
    values = np.asarray([np.asarray(cell_fn(cell), dtype=np.float64) for cell in cells])
    total = np.tensordot(weights, values, axes=1)
    return float(total) if np.ndim(total) == 0 else total


def _marginalize_rows(spec: ScmSpec, keys: np.ndarray) -> Dict[str, np.ndarray]:
    """Subpopulation-level quantities for a block of keys."""
    weights = completion_weights(spec)
    n_completions = len(weights)
    arrays = _cell_arrays(spec, full_cells(spec, keys))
    result = {}
    for name in ("p_y_do_x1", "p_y_do_x0", "pns"):
        values = arrays[name].reshape(len(keys), n_completions)
        result[name] = (values * weights).sum(axis=1)
    joint = arrays["joint"].reshape(len(keys), n_completions, 2, 2)
    result["joint"] = (joint * weights[None, :, None, None]).sum(axis=1)
    return result


def subpop_distributions(spec: ScmSpec, key: int) -> CellDistributions:
    key_to_bits(key, spec.n_observed)
    return _distributions_at(_marginalize_rows(spec, np.array([key])), 0)


def subpop_true_bounds(spec: ScmSpec, key: int) -> CausationBounds:
    """Exact PNS bounds of a subpopulation from its exact distributions."""
    return pns_bounds(subpop_distributions(spec, key).distribution_pair())


def _optional_bounds(function, pair: DistributionPair) -> Tuple[float, float]:
    try:
        bounds = function(pair)
    except UndefinedQuantityError:
        return float("nan"), float("nan")
    return bounds.lb, bounds.ub


def _chunk_frame(spec: ScmSpec, start: int, stop: int) -> pd.DataFrame:
    keys = np.arange(start, stop, dtype=np.int64)
    arrays = _marginalize_rows(spec, keys)
    columns = {"key": keys}
    features = keys_to_features(keys, spec.n_observed)
    for i, name in enumerate(feature_columns(spec.n_observed)):
        columns[name] = features[:, i].astype(np.int64)
    joint = arrays["joint"]
    columns.update(
        {
            "p_y_do_x1": arrays["p_y_do_x1"],
            "p_y_do_x0": arrays["p_y_do_x0"],
            "p_x1y1": joint[:, 1, 1],
            "p_x1y0": joint[:, 1, 0],
            "p_x0y1": joint[:, 0, 1],
            "p_x0y0": joint[:, 0, 0],
            "pns": arrays["pns"],
        }
    )

    bounds = {name: np.empty(len(keys)) for name in DISTRIBUTION_COLUMNS[7:]}
    for row in range(len(keys)):
        pair = _distributions_at(arrays, row).distribution_pair()
        pns = pns_bounds(pair)
        bounds["lb"][row], bounds["ub"][row] = pns.lb, pns.ub
        bounds["pn_lb"][row], bounds["pn_ub"][row] = _optional_bounds(pn_bounds, pair)
        bounds["ps_lb"][row], bounds["ps_ub"][row] = _optional_bounds(ps_bounds, pair)
    columns.update(bounds)
    return pd.DataFrame(columns)


@dataclass
class InformerTable:
    """Exact distributions and bounds for every subpopulation, ordered by key."""

    frame: pd.DataFrame
    spec_hash: str
    n_observed: int

    def __len__(self):
        return len(self.frame)

    @property
    def keys(self) -> np.ndarray:
        return self.frame["key"].to_numpy()

    def features(self) -> np.ndarray:
        return self.frame[feature_columns(self.n_observed)].to_numpy(dtype=np.float64)

    def labels(self, label: str, quantity: str = "PNS") -> np.ndarray:
        """Exact bound column; PN and PS rows are NaN where the bound is undefined."""
        if label not in ("lb", "ub"):
            raise ValidationError(f"Unknown label: {label}")
        prefix = QUANTITY_PREFIXES.get(str(quantity).upper())
        if prefix is None:
            raise ValidationError(f"Unknown quantity: {quantity}")
        return self.frame[prefix + label].to_numpy(dtype=np.float64)

    def distributions(self, key: int) -> CellDistributions:
        row = self.frame.iloc[int(key)]
        return CellDistributions(
            p_y_do_x1=float(row["p_y_do_x1"]),
            p_y_do_x0=float(row["p_y_do_x0"]),
            joint=(
                (float(row["p_x0y0"]), float(row["p_x0y1"])),
                (float(row["p_x1y0"]), float(row["p_x1y1"])),
            ),
            pns=float(row["pns"]),
        )

    def validate(self):
        expected = np.arange(1 << self.n_observed)
        if len(self.frame) != len(expected) or not np.array_equal(self.keys, expected):
            raise ValidationError(
                "Informer table must hold every subpopulation key exactly once, in order"
            )

    def summary(self) -> Dict[str, float]:
        lb, ub, pns = self.frame["lb"], self.frame["ub"], self.frame["pns"]
        return {
            "rows": len(self.frame),
            "lb_mean": float(lb.mean()),
            "ub_mean": float(ub.mean()),
            "width_mean": float((ub - lb).mean()),
            "pns_mean": float(pns.mean()),
            "pns_min": float(pns.min()),
            "pns_max": float(pns.max()),
        }


def enumerate_informer(
    spec: ScmSpec, workers: int = 1, max_rows: Optional[int] = None
) -> InformerTable:
    """
    Build the full table. Work is split into fixed blocks of CHUNK_KEYS keys
    so the result does not depend on ``workers``.
    """
    n_rows = spec.n_subpopulations
    limit = settings.PNSLEARN_INFORMER_MAX_ROWS if max_rows is None else max_rows
    if n_rows > limit:
        raise ResourceBudgetError(
            f"Informer table needs {n_rows} rows; budget is {limit} "
            f"(PNSLEARN_INFORMER_MAX_ROWS)"
        )
    completions(spec)

    ranges = [(start, min(start + CHUNK_KEYS, n_rows)) for start in range(0, n_rows, CHUNK_KEYS)]
    logger.info(
        f"Enumerating {n_rows} subpopulations x {1 << spec.n_unobserved} completions "
        f"in {len(ranges)} blocks with {workers} worker(s)"
    )
    if workers > 1 and len(ranges) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            frames = list(
                pool.map(
                    _chunk_frame,
                    [spec] * len(ranges),
                    [start for start, _ in ranges],
                    [stop for _, stop in ranges],
                )
            )
    else:
        frames = [_chunk_frame(spec, start, stop) for start, stop in ranges]

    frame = pd.concat(frames, ignore_index=True)
    table = InformerTable(frame=frame, spec_hash=spec.identity_hash(), n_observed=spec.n_observed)
    table.validate()
    return table
