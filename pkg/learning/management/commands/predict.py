"""
Management command to write predictions of a saved model.
"""

from pathlib import Path

from core.commands import PipelineCommand
from learning.services import PredictionService


class Command(PipelineCommand):
    help = "Predict a bound for every subpopulation (or a dataset's records)"
    stage = "predict"

    def add_arguments(self, parser):
        parser.add_argument("--model", required=True, help="Model JSON written by `train`")
        parser.add_argument("--dataset", help="Only predict this dataset's subpopulations")
        parser.add_argument("--out", help="CSV path (default: <output>/predictions_<model>.csv)")
        self.add_output_argument(parser)

    def handle(self, *args, **options):
        model_path = Path(options["model"])
        out = options.get("out") or (
            self.output_dir(options) / f"predictions_{model_path.stem}.csv"
        )
        path = PredictionService().predict(model_path, out, options.get("dataset"))
        self.stdout.write(self.style.SUCCESS(f"Predictions written to {path}"))
