"""
Management command to draw Monte-Carlo samples and count them per subpopulation.
"""

from core.commands import PipelineCommand
from datagen.sampling import SampleRegime
from datagen.services import SamplingService


class Command(PipelineCommand):
    help = "Generate experimental and/or observational sample counters"
    stage = "sample"

    def add_arguments(self, parser):
        parser.add_argument("spec", help="SCM spec JSON")
        parser.add_argument(
            "--regime",
            choices=[*SampleRegime.values, "both"],
            default="both",
            help="Which regime to sample (default: both)",
        )
        parser.add_argument(
            "--n",
            type=int,
            required=True,
            help="Number of samples per regime",
        )
        parser.add_argument(
            "--emit-raw",
            metavar="FILE",
            help="Also write every sample as CSV (one file per regime, prefixed with the regime)",
        )
        self.add_seed_argument(parser)
        self.add_output_argument(parser)
        self.add_workers_argument(parser)
        self.add_force_argument(parser)

    def handle(self, *args, **options):
        if options["n"] < 0:
            raise self.usage_error("--n must be non-negative")

        service = SamplingService(self.output_dir(options))
        regimes = (
            SampleRegime.values if options["regime"] == "both" else [options["regime"]]
        )
        for regime in regimes:
            emit_raw = None
            if options.get("emit_raw"):
                emit_raw = (
                    options["emit_raw"]
                    if len(regimes) == 1
                    else f"{regime}_{options['emit_raw']}"
                )
            counters, _ = service.sample(
                options["spec"],
                regime,
                options["n"],
                self.seed(options),
                workers=self.workers(options),
                emit_raw=emit_raw,
                force=options["force"],
            )
            populated = int((counters.totals() > 0).sum())
            self.stdout.write(
                self.style.SUCCESS(
                    f"{regime}: {counters.n_samples} samples over {populated} "
                    f"subpopulations -> {service.counters_path(regime)}"
                )
            )
