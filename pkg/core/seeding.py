"""
Deterministic seed derivation.

A stage seed is the first 32-bit word generated by
``numpy.random.SeedSequence(entropy=seed, spawn_key=(STAGE_CODES[stage], *indices))``.
Stages can therefore be rerun on their own and still draw the numbers they
would have drawn inside a full run.
"""

import numpy as np
from django.core.exceptions import ValidationError

STAGE_CODES = {
    "scm": 1,
    "sample": 2,
    "train": 3,
    "tree": 4,
    "tune": 5,
    "folds": 6,
    "subsample": 7,
    "minibatch": 8,
}


def check_seed(seed) -> int:
    try:
        value = int(seed)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"Seed must be an integer, got {seed!r}") from exc
    if value < 0:
        raise ValidationError(f"Seed must be non-negative, got {value}")
    return value


def derive_seed(seed: int, stage: str, *indices: int) -> int:
    """Child seed for ``stage`` (and optional integer indices) under ``seed``."""
    try:
        code = STAGE_CODES[stage]
    except KeyError as exc:
        raise ValidationError(f"Unknown seed stage: {stage}") from exc
    sequence = np.random.SeedSequence(
        entropy=check_seed(seed), spawn_key=(code, *(int(i) for i in indices))
    )
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def stage_rng(seed: int, stage: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stage, *indices))
