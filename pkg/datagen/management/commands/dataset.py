"""
Management command to build the labelled training dataset from sample counters.
"""

from bounds.formulas import Quantity
from core.commands import PipelineCommand
from datagen.datasets import DEFAULT_THRESHOLD
from datagen.services import DatasetService


class Command(PipelineCommand):
    help = "Filter subpopulations by sample count and label them with estimated bounds"
    stage = "dataset"

    def add_arguments(self, parser):
        parser.add_argument(
            "--threshold",
            type=int,
            default=DEFAULT_THRESHOLD,
            help=f"Minimum samples per regime (default: {DEFAULT_THRESHOLD})",
        )
        parser.add_argument(
            "--quantity",
            choices=[q.lower() for q in Quantity.values],
            default="pns",
            help="Which probability of causation labels the records (default: pns)",
        )
        parser.add_argument("--exp", help="Experimental counters (default: in --output)")
        parser.add_argument("--obs", help="Observational counters (default: in --output)")
        self.add_output_argument(parser)
        self.add_force_argument(parser)

    def handle(self, *args, **options):
        if options["threshold"] < 1:
            raise self.usage_error("--threshold must be at least 1")

        service = DatasetService(self.output_dir(options))
        dataset, _ = service.build(
            threshold=options["threshold"],
            quantity=options["quantity"],
            exp_path=options.get("exp"),
            obs_path=options.get("obs"),
            force=options["force"],
        )
        inconsistent = dataset.meta.get("inconsistent", 0)
        self.stdout.write(f"records: {len(dataset)}")
        self.stdout.write(f"inconsistent: {inconsistent}")
        self.stdout.write(
            self.style.SUCCESS(f"Dataset written to {service.dataset_path}")
        )
