"""
Seeded Monte-Carlo sampling aggregated into per-subpopulation counters.

Random numbers come from a counter-based generator. Samples are grouped in
fixed blocks of BLOCK_SIZE; block ``b`` of a regime draws from
``Philox(SeedSequence([seed, regime_code, b]))``. Within a block the draw
order is: U_Z for every unit (row-major), then U_X, then U_Y, then, in the
experimental regime, the randomised treatment. Blocks are independent, so
splitting them across workers cannot change the counts.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError
from django.db import models

from core.exceptions import SpecMismatchError
from informer.oracle import feature_columns, features_to_keys
from scm.mechanism import simulate_batch
from scm.spec import ScmSpec

logger = logging.getLogger(__name__)

GENERATOR_NAME = "pnslearn-datagen/1"
PRNG_NAME = "numpy.random.Philox(SeedSequence([seed, regime, block]))"
BLOCK_SIZE = 65536


class SampleRegime(models.TextChoices):
    OBSERVATIONAL = "observational", "Observational"
    EXPERIMENTAL = "experimental", "Experimental (X ~ Bernoulli(0.5))"


REGIME_CODES = {SampleRegime.OBSERVATIONAL: 0, SampleRegime.EXPERIMENTAL: 1}


def _regime(regime: str) -> SampleRegime:
    try:
        return SampleRegime(regime)
    except ValueError as exc:
        raise ValidationError(f"Unknown sampling regime: {regime}") from exc


@dataclass
class SampleCounters:
    """
    ``counts[key, x, y]`` is the number of samples of subpopulation ``key``
    with treatment x and outcome y.
    """

    counts: np.ndarray
    regime: str
    spec_hash: str
    n_samples: int
    seed: Optional[int] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 3 or self.counts.shape[1:] != (2, 2):
            raise ValidationError("Counters must have shape (n_keys, 2, 2)")
        if np.any(self.counts < 0):
            raise ValidationError("Counts must be non-negative")

    @classmethod
    def zeros(cls, spec: ScmSpec, regime: str, seed=None) -> "SampleCounters":
        return cls(
            counts=np.zeros((spec.n_subpopulations, 2, 2), dtype=np.int64),
            regime=_regime(regime).value,
            spec_hash=spec.identity_hash(),
            n_samples=0,
            seed=seed,
        )

    @property
    def n_keys(self) -> int:
        return self.counts.shape[0]

    def totals(self) -> np.ndarray:
        """Samples routed to each key."""
        return self.counts.sum(axis=(1, 2))

    def __eq__(self, other):
        if not isinstance(other, SampleCounters):
            return NotImplemented
        return (
            self.regime == other.regime
            and self.spec_hash == other.spec_hash
            and self.n_samples == other.n_samples
            and np.array_equal(self.counts, other.counts)
        )


def block_rng(seed: int, regime: str, block: int) -> np.random.Generator:
    sequence = np.random.SeedSequence([int(seed), REGIME_CODES[_regime(regime)], int(block)])
    return np.random.Generator(np.random.Philox(sequence))


def n_blocks(n_samples: int) -> int:
    return -(-int(n_samples) // BLOCK_SIZE)


def block_length(n_samples: int, block: int) -> int:
    return min(BLOCK_SIZE, int(n_samples) - block * BLOCK_SIZE)


def partition_blocks(n_samples: int, parts: int) -> List[Tuple[int, int]]:
    """Split the block indices into at most ``parts`` contiguous [start, stop) ranges."""
    total = n_blocks(n_samples)
    parts = max(1, min(parts, total))
    edges = np.linspace(0, total, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def simulate_block(spec: ScmSpec, n_samples: int, regime: str, seed: int, block: int):
    """(z, x, y) for every unit of one block."""
    m = block_length(n_samples, block)
    rng = block_rng(seed, regime, block)
    uz = rng.random((m, spec.n_features)) < spec.pz
    ux = rng.random(m) < spec.p_ux
    uy = rng.random(m) < spec.p_uy
    assigned = None
    if _regime(regime) == SampleRegime.EXPERIMENTAL:
        assigned = rng.random(m) < 0.5
    return simulate_batch(spec, uz, ux, uy, x_assigned=assigned)


def count_blocks(
    spec: ScmSpec, n_samples: int, regime: str, seed: int, start: int, stop: int
) -> np.ndarray:
    """Counts contributed by blocks ``start``..``stop - 1``."""
    n_keys = spec.n_subpopulations
    counts = np.zeros(n_keys * 4, dtype=np.int64)
    for block in range(start, stop):
        z, x, y = simulate_block(spec, n_samples, regime, seed, block)
        keys = features_to_keys(z[:, : spec.n_observed])
        cells = keys * 4 + x.astype(np.int64) * 2 + y.astype(np.int64)
        counts += np.bincount(cells, minlength=n_keys * 4)
    return counts.reshape(n_keys, 2, 2)


def partial_counters(
    spec: ScmSpec, n_samples: int, regime: str, seed: int, start: int, stop: int
) -> SampleCounters:
    """Counters of a sub-range of blocks; merging all ranges gives the full run."""
    counts = count_blocks(spec, n_samples, regime, seed, start, stop)
    return SampleCounters(
        counts=counts,
        regime=_regime(regime).value,
        spec_hash=spec.identity_hash(),
        n_samples=int(counts.sum()),
        seed=seed,
    )


def generate_counters(
    spec: ScmSpec, n_samples: int, regime: str, seed: int, workers: int = 1
) -> SampleCounters:
    """Draw ``n_samples`` units under ``regime`` and count them per (key, x, y)."""
    if n_samples < 0:
        raise ValidationError(f"n_samples must be non-negative, got {n_samples}")
    regime = _regime(regime).value
    counters = SampleCounters.zeros(spec, regime, seed=seed)
    if n_samples == 0:
        return counters

    ranges = partition_blocks(n_samples, workers)
    logger.info(
        f"Sampling {n_samples} {regime} units in {n_blocks(n_samples)} blocks "
        f"across {len(ranges)} worker(s)"
    )
    if len(ranges) > 1:
        with ProcessPoolExecutor(max_workers=len(ranges)) as pool:
            parts = pool.map(
                count_blocks,
                [spec] * len(ranges),
                [n_samples] * len(ranges),
                [regime] * len(ranges),
                [seed] * len(ranges),
                [start for start, _ in ranges],
                [stop for _, stop in ranges],
            )
            for part in parts:
                counters.counts += part
    else:
        counters.counts += count_blocks(spec, n_samples, regime, seed, *ranges[0])

    counters.n_samples = int(n_samples)
    return counters


def merge_counters(a: SampleCounters, b: SampleCounters) -> SampleCounters:
    """Cellwise sum of two counters of the same SCM and regime."""
    if a.spec_hash != b.spec_hash:
        raise SpecMismatchError(
            f"Cannot merge counters of different SCMs ({a.spec_hash[:12]} vs {b.spec_hash[:12]})"
        )
    if a.regime != b.regime:
        raise SpecMismatchError(f"Cannot merge {a.regime} and {b.regime} counters")
    if a.counts.shape != b.counts.shape:
        raise SpecMismatchError("Counters cover different numbers of subpopulations")
    return SampleCounters(
        counts=a.counts + b.counts,
        regime=a.regime,
        spec_hash=a.spec_hash,
        n_samples=a.n_samples + b.n_samples,
        seed=a.seed if a.seed == b.seed else None,
    )


def counters_meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_counters(counters: SampleCounters, path, n_observed: int) -> Path:
    """Snapshot as CSV ``key,regime,x,y,count`` (non-zero cells) plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys, xs, ys = np.nonzero(counters.counts)
    frame = pd.DataFrame(
        {
            "key": keys,
            "regime": counters.regime,
            "x": xs,
            "y": ys,
            "count": counters.counts[keys, xs, ys],
        }
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    meta = {
        "spec_hash": counters.spec_hash,
        "regime": counters.regime,
        "n_samples": counters.n_samples,
        "seed": counters.seed,
        "n_observed": n_observed,
        "generator": GENERATOR_NAME,
        "prng": PRNG_NAME,
        "block_size": BLOCK_SIZE,
    }
    counters_meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    logger.info(f"Wrote {counters.regime} counters ({len(frame)} non-zero cells) to {path}")
    return path


def load_counters(path) -> SampleCounters:
    path = Path(path)
    meta_file = counters_meta_path(path)
    if not meta_file.exists():
        raise FileNotFoundError(2, "Counter sidecar missing", str(meta_file))
    meta = json.loads(meta_file.read_text())
    frame = pd.read_csv(path)
    if list(frame.columns) != ["key", "regime", "x", "y", "count"]:
        raise ValidationError(f"{path} does not have the counter snapshot layout")
    if len(frame) and set(frame["regime"]) != {meta["regime"]}:
        raise ValidationError(f"{path} mixes regimes")

    counts = np.zeros((1 << int(meta["n_observed"]), 2, 2), dtype=np.int64)
    np.add.at(
        counts,
        tuple(frame[name].to_numpy(dtype=np.int64) for name in ("key", "x", "y")),
        frame["count"].to_numpy(dtype=np.int64),
    )
    counters = SampleCounters(
        counts=counts,
        regime=meta["regime"],
        spec_hash=meta["spec_hash"],
        n_samples=int(meta["n_samples"]),
        seed=meta["seed"],
    )
    if int(counters.counts.sum()) != counters.n_samples:
        raise ValidationError(f"{path}: counts do not add up to n_samples")
    return counters


def emit_raw_samples(
    spec: ScmSpec, n_samples: int, regime: str, seed: int, path, append: bool = False
) -> Path:
    """
    Audit dump of the exact samples ``generate_counters`` counts, as CSV
    ``regime,x,y,z1..zN``. Unobserved features are not written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    regime = _regime(regime).value
    columns = ["regime", "x", "y", *feature_columns(spec.n_observed)]
    write_header = not (append and path.exists())
    mode = "a" if append else "w"
    for block in range(n_blocks(n_samples)):
        z, x, y = simulate_block(spec, n_samples, regime, seed, block)
        frame = pd.DataFrame(z[:, : spec.n_observed], columns=columns[3:])
        frame.insert(0, "y", y)
        frame.insert(0, "x", x)
        frame.insert(0, "regime", regime)
        frame.to_csv(path, mode=mode, header=write_header, index=False, lineterminator="\n")
        mode, write_header = "a", False
    if n_samples == 0 and write_header:
        pd.DataFrame(columns=columns).to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {n_samples} raw {regime} samples to {path}")
    return path
