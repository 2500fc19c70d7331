"""
Management command to evaluate trained models against the informer table.
"""

import pandas as pd
from django.conf import settings

from core.commands import PipelineCommand
from evaluation.services import EvaluationService
from learning.catalog import MODEL_NAMES
from learning.services import LABELS


class Command(PipelineCommand):
    help = "Score trained models on every subpopulation and write comparison reports"
    stage = "eval"

    def add_arguments(self, parser):
        parser.add_argument(
            "--models",
            nargs="+",
            choices=MODEL_NAMES,
            help="Models to evaluate (default: every trained model in --output)",
        )
        parser.add_argument("--labels", nargs="+", choices=LABELS, default=list(LABELS))
        parser.add_argument("--informer", help="Informer CSV (default: in --output)")
        parser.add_argument("--dataset", help="Dataset CSV (default: in --output)")
        parser.add_argument(
            "--bins", type=int, help="Histogram bins per axis (default: PNSLEARN_REPORT_BINS)"
        )
        parser.add_argument("--no-svg", action="store_true", help="Skip the scatter plots")
        parser.add_argument(
            "--select-min-lb",
            type=float,
            help="Also select subpopulations whose predicted lower bound is at least this",
        )
        parser.add_argument(
            "--select-max-ub",
            type=float,
            help="Also select subpopulations whose predicted upper bound is at most this",
        )
        self.add_output_argument(parser)
        self.add_force_argument(parser)

    def handle(self, *args, **options):
        bins = options.get("bins")
        if bins is None:
            bins = settings.PNSLEARN_REPORT_BINS
        if bins < 1:
            raise self.usage_error("--bins must be at least 1")
        for option in ("select_min_lb", "select_max_ub"):
            value = options.get(option)
            if value is not None and not 0.0 <= value <= 1.0:
                raise self.usage_error(f"--{option.replace('_', '-')} must lie in [0, 1]")

        output_dir = self.output_dir(options)
        service = EvaluationService(output_dir)
        service.run(
            models=options.get("models"),
            labels=options["labels"],
            informer_path=options.get("informer"),
            dataset_path=options.get("dataset"),
            bins=bins,
            svg=not options["no_svg"],
            select_min_lb=options.get("select_min_lb"),
            select_max_ub=options.get("select_max_ub"),
            force=options["force"],
        )

        comparison = pd.read_csv(output_dir / "comparison.csv")
        if comparison.empty:
            self.stdout.write(self.style.WARNING("No trained models found to evaluate"))
        else:
            self.stdout.write(comparison.to_string(index=False))
        self.stdout.write(self.style.SUCCESS(f"Reports written to {output_dir}"))
