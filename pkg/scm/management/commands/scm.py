"""
Management command to generate and inspect SCM spec files.
"""

from pathlib import Path

from core.commands import PipelineCommand, install_usage_exit
from scm.services import SPEC_FILE, ScmService
from scm.spec import describe_spec, load_spec


class Command(PipelineCommand):
    help = "Generate (gen) or print (show) a structural causal model spec"
    stage = "scm"

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest="action", required=True)

        gen = install_usage_exit(
            subparsers.add_parser("gen", help="Write a spec file")
        )
        source = gen.add_mutually_exclusive_group(required=True)
        source.add_argument(
            "--paper", action="store_true", help="The 20-feature reference model"
        )
        source.add_argument("--seed", type=int, help="Draw a random model with this seed")
        gen.add_argument(
            "--coeff-range",
            nargs=2,
            type=float,
            default=(-1.0, 1.0),
            metavar=("LOW", "HIGH"),
            help="Range of the random coefficients (default: -1 1)",
        )
        gen.add_argument(
            "--prob-range",
            nargs=2,
            type=float,
            default=(0.0, 1.0),
            metavar=("LOW", "HIGH"),
            help="Range of the random Bernoulli parameters (default: 0 1)",
        )
        gen.add_argument(
            "--upper-branch",
            type=int,
            choices=(0, 1),
            default=1,
            help="Value of f_Y on 1 < v < 2 (default: 1)",
        )
        gen.add_argument("--out", help=f"Spec path (default: <output>/{SPEC_FILE})")
        self.add_output_argument(gen)

        show = install_usage_exit(
            subparsers.add_parser("show", help="Print a spec file")
        )
        show.add_argument("path", help="Spec JSON file")

    def handle(self, *args, **options):
        if options["action"] == "show":
            spec = load_spec(options["path"])
            self.stdout.write(describe_spec(spec))
            return

        out = Path(options.get("out") or self.output_dir(options) / SPEC_FILE)
        spec = ScmService().generate(
            out,
            paper=options["paper"],
            seed=options.get("seed"),
            coeff_range=options["coeff_range"],
            prob_range=options["prob_range"],
            upper_branch=options["upper_branch"],
        )
        self.stdout.write(
            self.style.SUCCESS(f"Wrote SCM {spec.identity_hash()[:12]} to {out}")
        )
