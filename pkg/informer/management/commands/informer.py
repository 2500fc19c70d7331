"""
Management command to compute the exact informer table of an SCM.
"""

from core.commands import PipelineCommand
from informer.services import InformerService


class Command(PipelineCommand):
    help = "Compute exact distributions and PNS bounds for every subpopulation"
    stage = "informer"

    def add_arguments(self, parser):
        parser.add_argument("spec", help="SCM spec JSON written by `scm gen`")
        self.add_output_argument(parser)
        self.add_workers_argument(parser)
        self.add_force_argument(parser)

    def handle(self, *args, **options):
        service = InformerService(self.output_dir(options))
        table, manifest = service.build(
            options["spec"], workers=self.workers(options), force=options["force"]
        )
        summary = table.summary()

        self.stdout.write(f"rows: {summary['rows']}")
        for name in ("lb_mean", "ub_mean", "width_mean", "pns_mean", "pns_min", "pns_max"):
            self.stdout.write(f"{name}: {summary[name]:.6f}")
        self.stdout.write(
            self.style.SUCCESS(f"Informer table written to {service.table_path}")
        )
