"""
Management command to train a regressor on dataset bound labels.
"""

from core.commands import PipelineCommand
from learning.activations import Activation
from learning.catalog import mlp_name
from learning.services import LABELS, TrainingService

# option name -> config field; only given options override the defaults
MLP_OPTIONS = {
    "epochs": "epochs",
    "learning_rate": "learning_rate",
    "batch_size": "batch_size",
    "leaky_alpha": "leaky_alpha",
}
TREE_OPTIONS = {
    "n_estimators": "n_estimators",
    "max_depth": "max_depth",
    "min_samples_split": "min_samples_split",
    "max_features": "max_features",
    "shrinkage": "shrinkage",
    "subsample": "subsample",
}


class Command(PipelineCommand):
    help = "Train an MLP, random forest or GBDT on the lower and/or upper bound labels"
    stage = "train"

    def add_arguments(self, parser):
        parser.add_argument("--model", choices=["mlp", "rf", "gbdt"], required=True)
        parser.add_argument(
            "--activation",
            choices=Activation.values,
            default=Activation.MISH,
            help="MLP hidden activation (default: mish)",
        )
        parser.add_argument(
            "--label",
            choices=[*LABELS, "both"],
            default="both",
            help="Which bound to learn (default: both)",
        )
        parser.add_argument("--dataset", help="Dataset CSV (default: <output>/dataset.csv)")

        mlp = parser.add_argument_group("MLP")
        mlp.add_argument("--epochs", type=int)
        mlp.add_argument("--learning-rate", type=float)
        mlp.add_argument("--batch-size", type=int, help="Minibatch size (default: full batch)")
        mlp.add_argument("--leaky-alpha", type=float)

        trees = parser.add_argument_group("Trees")
        trees.add_argument("--n-estimators", type=int)
        trees.add_argument("--max-depth", type=int)
        trees.add_argument("--min-samples-split", type=int)
        trees.add_argument("--max-features", type=int)
        trees.add_argument("--shrinkage", type=float, help="GBDT learning rate")
        trees.add_argument("--subsample", type=float, help="GBDT row fraction per round")

        tuning = parser.add_argument_group("Tuning")
        tuning.add_argument(
            "--tune",
            type=int,
            default=0,
            metavar="BUDGET",
            help="Run the two-stage search with this many random candidates first",
        )
        tuning.add_argument("--folds", type=int, default=5)

        self.add_seed_argument(parser)
        self.add_output_argument(parser)
        self.add_workers_argument(parser)
        self.add_force_argument(parser)

    def handle(self, *args, **options):
        model = options["model"]
        name = mlp_name(options["activation"]) if model == "mlp" else model
        mapping = MLP_OPTIONS if model == "mlp" else TREE_OPTIONS
        overrides = {field: options.get(option) for option, field in mapping.items()}

        if options["tune"] < 0:
            raise self.usage_error("--tune must be non-negative")

        output_dir = self.output_dir(options)
        service = TrainingService(output_dir)
        dataset_path = options.get("dataset") or output_dir / "dataset.csv"
        labels = LABELS if options["label"] == "both" else (options["label"],)

        for label in labels:
            service.train(
                name,
                label,
                dataset_path,
                self.seed(options),
                overrides=overrides,
                tune_budget=options["tune"],
                k_folds=options["folds"],
                workers=self.workers(options),
                force=options["force"],
            )
            self.stdout.write(
                self.style.SUCCESS(
                    f"{name} ({label}) -> {service.model_path(name, label)}"
                )
            )
