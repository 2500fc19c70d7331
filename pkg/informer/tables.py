"""
CSV persistence for informer tables.

Columns: key, z1..zN, the exact distributions, pns and its bounds lb/ub,
then pn_lb, pn_ub, ps_lb, ps_ub (empty where PN or PS is undefined).
Reals are written with 17 significant digits. A ``<file>.meta.json`` sidecar
records the SCM hash.
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError

from pnslearn import __version__

from .oracle import DISTRIBUTION_COLUMNS, InformerTable, feature_columns

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def table_columns(n_observed: int):
    return ["key", *feature_columns(n_observed), *DISTRIBUTION_COLUMNS]


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_informer(table: InformerTable, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = table.frame[table_columns(table.n_observed)]
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    meta = {
        "spec_hash": table.spec_hash,
        "n_observed": table.n_observed,
        "rows": len(table),
        "version": __version__,
    }
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    logger.info(f"Wrote informer table ({len(table)} rows) to {path}")
    return path


def load_informer(path) -> InformerTable:
    path = Path(path)
    meta_file = meta_path(path)
    if not meta_file.exists():
        raise FileNotFoundError(2, "Informer sidecar missing", str(meta_file))
    meta = json.loads(meta_file.read_text())
    frame = pd.read_csv(path, float_precision="round_trip")
    expected = table_columns(int(meta["n_observed"]))
    if list(frame.columns) != expected:
        raise ValidationError(f"{path} does not have the informer column layout")
    integer_columns = ["key", *feature_columns(int(meta["n_observed"]))]
    frame[integer_columns] = frame[integer_columns].astype(np.int64)
    table = InformerTable(
        frame=frame, spec_hash=meta["spec_hash"], n_observed=int(meta["n_observed"])
    )
    table.validate()
    return table
