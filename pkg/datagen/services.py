"""
Sampling and dataset stages.
"""

import logging
from pathlib import Path
from typing import Optional

from bounds.formulas import Quantity
from core.manifests import ManifestManager
from core.seeding import derive_seed
from scm.spec import load_spec

from .datasets import (
    DEFAULT_THRESHOLD,
    build_dataset,
    dataset_meta_path,
    load_dataset,
    save_dataset,
)
from .sampling import (
    SampleRegime,
    counters_meta_path,
    emit_raw_samples,
    generate_counters,
    load_counters,
    save_counters,
)

logger = logging.getLogger(__name__)

DATASET_FILE = "dataset.csv"


def counters_file(regime: str) -> str:
    return f"counters_{SampleRegime(regime).value}.csv"


class SamplingService:
    """Monte-Carlo sample counters for one run directory."""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.manifests = ManifestManager(self.output_dir)

    def counters_path(self, regime: str) -> Path:
        return self.output_dir / counters_file(regime)

    def sample(
        self,
        spec_path,
        regime: str,
        n_samples: int,
        seed: int,
        workers: int = 1,
        emit_raw: Optional[str] = None,
        force: bool = False,
    ):
        """Counters for ``regime``; ``seed`` is the run's master seed."""
        spec = load_spec(spec_path)
        regime = SampleRegime(regime).value
        stage_seed = derive_seed(seed, "sample")
        path = self.counters_path(regime)

        def produce():
            counters = generate_counters(spec, n_samples, regime, stage_seed, workers=workers)
            written = [save_counters(counters, path, spec.n_observed), counters_meta_path(path)]
            if emit_raw:
                raw_path = self.output_dir / emit_raw
                written.append(
                    emit_raw_samples(spec, n_samples, regime, stage_seed, raw_path)
                )
            return written

        manifest = self.manifests.run_stage(
            f"sample_{regime}",
            inputs={"scm": spec_path},
            config={
                "spec_hash": spec.identity_hash(),
                "regime": regime,
                "n_samples": int(n_samples),
                "stage_seed": stage_seed,
                "emit_raw": emit_raw,
            },
            seed=seed,
            produce=produce,
            force=force,
        )
        return load_counters(path), manifest


class DatasetService:
    """Threshold filtering and labelling of a run's counters."""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.manifests = ManifestManager(self.output_dir)

    @property
    def dataset_path(self) -> Path:
        return self.output_dir / DATASET_FILE

    def build(
        self,
        threshold: int = DEFAULT_THRESHOLD,
        quantity: str = Quantity.PNS,
        exp_path=None,
        obs_path=None,
        force: bool = False,
    ):
        exp_path = Path(exp_path or self.output_dir / counters_file(SampleRegime.EXPERIMENTAL))
        obs_path = Path(obs_path or self.output_dir / counters_file(SampleRegime.OBSERVATIONAL))
        quantity = Quantity(str(quantity).upper())

        def produce():
            dataset = build_dataset(
                load_counters(exp_path), load_counters(obs_path), threshold, quantity
            )
            path = save_dataset(dataset, self.dataset_path)
            return [path, dataset_meta_path(path)]

        manifest = self.manifests.run_stage(
            "dataset",
            inputs={
                "counters_experimental": exp_path,
                "counters_observational": obs_path,
            },
            config={"threshold": int(threshold), "quantity": quantity.value},
            seed=None,
            produce=produce,
            force=force,
        )
        return load_dataset(self.dataset_path), manifest
