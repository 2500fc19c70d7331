"""
Management command running the whole pipeline from one run config.

Stages: scm -> informer -> sample (both regimes) -> dataset -> train
(every model and label) -> eval. Each stage reuses its cached output when
its manifest is still fresh.
"""

import json
import logging

from core.commands import PipelineCommand
from core.runconfig import (
    SCM_SOURCES,
    load_run_config,
    merge_model_configs,
    merge_overrides,
    preset_config,
)
from core.seeding import derive_seed
from datagen.sampling import SampleRegime
from datagen.services import DatasetService, SamplingService
from evaluation.services import EvaluationService
from informer.services import InformerService
from learning.services import TrainingService
from scm.services import ScmService

logger = logging.getLogger(__name__)

RUN_CONFIG_FILE = "run_config.json"
TUNE_BUDGET = 10
PRESET_KEYS = ("n_exp", "n_obs", "threshold")


class Command(PipelineCommand):
    help = "Run every stage: SCM, informer, sampling, dataset, training and evaluation"
    stage = "reproduce"

    def add_arguments(self, parser):
        parser.add_argument("--config", help="JSON run config (see core/runconfig.py)")
        parser.add_argument(
            "--desk-scale",
            action="store_true",
            help="Desk preset: 2e6 samples per regime, threshold 400 and smaller MLPs",
        )
        parser.add_argument("--scm", choices=SCM_SOURCES, help="SCM source (default: paper)")
        parser.add_argument("--scm-seed", type=int, help="Seed of a random SCM")
        parser.add_argument("--scm-path", help="Spec file for --scm file")
        parser.add_argument("--seed", type=int, help="Master seed (default: 0)")
        parser.add_argument(
            "--tune",
            action="store_true",
            default=None,
            help="Tune every model with the two-stage search before training",
        )
        self.add_output_argument(parser)
        self.add_workers_argument(parser)
        self.add_force_argument(parser)

    def run_config(self, options):
        if options.get("config"):
            config = load_run_config(options["config"])
        else:
            config = preset_config("paper")
        overrides = {}
        if options["desk_scale"]:
            desk = preset_config("desk")
            overrides.update({key: getattr(desk, key) for key in PRESET_KEYS})
            overrides["model_configs"] = merge_model_configs(
                desk.model_configs, config.model_configs
            )
        overrides.update(
            {
                "scm.source": options.get("scm"),
                "scm.seed": options.get("scm_seed"),
                "scm.path": options.get("scm_path"),
                "seed": options.get("seed"),
                "tune": options.get("tune"),
                "output": options.get("output"),
                "workers": options.get("workers"),
            }
        )
        return merge_overrides(config, overrides)

    def handle(self, *args, **options):
        if options.get("seed") is not None:
            self.seed(options)
        if options.get("workers") is not None:
            self.workers(options)

        config = self.run_config(options)
        output_dir = config.output_dir
        output_dir.mkdir(parents=True, exist_ok=True)
        (output_dir / RUN_CONFIG_FILE).write_text(
            json.dumps(config.manifest_view(), indent=2, sort_keys=True) + "\n"
        )
        seed, workers, force = config.seed, config.workers, options["force"]
        logger.info(f"Reproducing into {output_dir} with seed {seed} and {workers} workers")

        scm_seed = config.scm.seed
        if config.scm.source == "random" and scm_seed is None:
            scm_seed = derive_seed(seed, "scm")
        spec_path = ScmService().resolve(
            config.scm.source, output_dir, seed=scm_seed, path=config.scm.path
        )
        self.stderr.write(f"scm: {spec_path}")

        table, _ = InformerService(output_dir).build(spec_path, workers=workers, force=force)
        self.stderr.write(f"informer: {len(table)} subpopulations")

        sampling = SamplingService(output_dir)
        for regime, n_samples in (
            (SampleRegime.EXPERIMENTAL, config.n_exp),
            (SampleRegime.OBSERVATIONAL, config.n_obs),
        ):
            sampling.sample(spec_path, regime, n_samples, seed, workers=workers, force=force)
            self.stderr.write(f"sample: {n_samples} {regime.value}")

        dataset, _ = DatasetService(output_dir).build(
            threshold=config.threshold, quantity=config.quantity, force=force
        )
        self.stderr.write(
            f"dataset: {len(dataset)} records, {dataset.meta.get('inconsistent', 0)} inconsistent"
        )

        training = TrainingService(output_dir)
        for name in config.models:
            for label in config.labels:
                training.train(
                    name,
                    label,
                    DatasetService(output_dir).dataset_path,
                    seed,
                    overrides=config.model_configs.get(name),
                    tune_budget=TUNE_BUDGET if config.tune else 0,
                    workers=workers,
                    force=force,
                )
                self.stderr.write(f"train: {name} ({label})")

        EvaluationService(output_dir).run(
            models=config.models, labels=config.labels, bins=config.bins, force=force
        )
        self.stdout.write(self.style.SUCCESS(f"Run complete; reports in {output_dir}"))
