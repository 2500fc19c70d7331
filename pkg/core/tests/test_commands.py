"""
Tests for the pipeline management commands and their exit codes.
"""

import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from core.commands import ExitCode
from core.management.commands.reproduce import Command as ReproduceCommand
from scm.spec import ScmSpec, paper_scm, save_spec


def toy_spec():
    return ScmSpec(
        n_features=5,
        n_observed=3,
        mx_coeffs=[0.41, -0.29, 0.23, 0.53, -0.61],
        my_coeffs=[-0.23, 0.31, 0.57, -0.41, 0.13],
        c_y=0.73,
        pz=[0.3, 0.6, 0.5, 0.2, 0.7],
        p_ux=0.4,
        p_uy=0.3,
    )


class CommandTestMixin:
    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.output = Path(self.tmp.name)
        self.spec_path = save_spec(toy_spec(), self.output / "scm.json")

    def tearDown(self):
        self.tmp.cleanup()
        super().tearDown()

    def call(self, *args):
        stdout, stderr = StringIO(), StringIO()
        call_command(*args, stdout=stdout, stderr=stderr)
        return stdout.getvalue()

    def assertExitCode(self, code, *args):
        with self.assertRaises(CommandError) as raised:
            self.call(*args)
        self.assertEqual(raised.exception.returncode, code)


class ScmCommandTest(CommandTestMixin, SimpleTestCase):
    """Test the scm command."""

    def test_gen_reference_and_show(self):
        """Test writing the reference model and printing it."""
        out = self.output / "paper.json"
        self.assertIn("Wrote SCM", self.call("scm", "gen", "--paper", "--out", str(out)))
        self.assertEqual(json.loads(out.read_text())["c_y"], paper_scm().c_y)
        shown = self.call("scm", "show", str(out))
        self.assertIn("c_y = -0.77953605542", shown)

    def test_gen_random(self):
        """Test a seeded random model in the output directory."""
        self.call("scm", "gen", "--seed", "5", "--output", str(self.output / "run"))
        self.assertTrue((self.output / "run" / "scm.json").exists())

    def test_show_missing_file(self):
        """Test that a missing spec is a data error."""
        self.assertExitCode(ExitCode.DATA, "scm", "show", str(self.output / "none.json"))

    def test_show_invalid_file(self):
        """Test that a malformed spec is a data error."""
        bad = self.output / "bad.json"
        bad.write_text("{}")
        self.assertExitCode(ExitCode.DATA, "scm", "show", str(bad))

    def test_usage_errors(self):
        """Test conflicting and missing arguments."""
        self.assertExitCode(ExitCode.USAGE, "scm", "gen", "--paper", "--seed", "1")
        self.assertExitCode(ExitCode.USAGE, "scm", "gen")
        self.assertExitCode(ExitCode.USAGE, "scm", "gen", "--seed", "1", "--upper-branch", "2")


class StageCommandTest(CommandTestMixin, SimpleTestCase):
    """Test the staged commands on a three-feature model."""

    def test_informer(self):
        """Test the summary printed for the informer table."""
        out = self.call("informer", str(self.spec_path), "--output", str(self.output))
        self.assertIn("rows: 8", out)
        self.assertTrue((self.output / "informer.csv").exists())

    @override_settings(PNSLEARN_INFORMER_MAX_ROWS=4)
    def test_informer_over_budget(self):
        """Test that an oversized table is a resource error."""
        self.assertExitCode(
            ExitCode.RESOURCE, "informer", str(self.spec_path), "--output", str(self.output)
        )

    def test_staged_pipeline(self):
        """Test sample, dataset, train, predict and eval in sequence."""
        output = ["--output", str(self.output)]
        self.call("informer", str(self.spec_path), *output)
        sampled = self.call("sample", str(self.spec_path), "--n", "20000", "--seed", "3", *output)
        self.assertIn("experimental: 20000 samples", sampled)
        self.assertIn("observational: 20000 samples", sampled)
        self.assertIn("records: 8", self.call("dataset", "--threshold", "500", *output))
        self.call("train", "--model", "rf", "--n-estimators", "3", "--seed", "3", *output)
        self.call("train", "--model", "gbdt", "--label", "lb", "--n-estimators", "4", *output)
        model = self.output / "models" / "rf_lb.json"
        self.call("predict", "--model", str(model), *output)
        predictions = pd.read_csv(self.output / "predictions_rf_lb.csv")
        self.assertEqual(len(predictions), 8)
        report = self.call("eval", "--no-svg", "--select-min-lb", "0.2", *output)
        self.assertIn("Lower bound", report)
        self.assertTrue((self.output / "selection_summary.csv").exists())

    def test_eval_without_models(self):
        """Test the warning when nothing has been trained."""
        output = ["--output", str(self.output)]
        self.call("informer", str(self.spec_path), *output)
        self.call("sample", str(self.spec_path), "--n", "5000", *output)
        self.call("dataset", "--threshold", "100", *output)
        self.assertIn("No trained models found", self.call("eval", "--no-svg", *output))

    def test_usage_errors(self):
        """Test rejected option values."""
        spec = str(self.spec_path)
        self.assertExitCode(ExitCode.USAGE, "sample", spec, "--n", "-1")
        self.assertExitCode(ExitCode.USAGE, "sample", spec, "--n", "10", "--seed", "-2")
        self.assertExitCode(ExitCode.USAGE, "sample", spec, "--n", "10", "--regime", "natural")
        self.assertExitCode(ExitCode.USAGE, "sample", spec, "--n", "10", "--workers", "0")
        self.assertExitCode(ExitCode.USAGE, "dataset", "--threshold", "0")
        self.assertExitCode(ExitCode.USAGE, "eval", "--bins", "0")
        self.assertExitCode(ExitCode.USAGE, "eval", "--select-max-ub", "1.5")
        self.assertExitCode(ExitCode.USAGE, "train", "--model", "svm")

    def test_data_errors(self):
        """Test missing inputs and mismatched artifacts."""
        output = ["--output", str(self.output)]
        self.assertExitCode(ExitCode.DATA, "dataset", *output)
        self.assertExitCode(ExitCode.DATA, "train", "--model", "rf", *output)
        self.assertExitCode(
            ExitCode.DATA, "predict", "--model", str(self.output / "none.json"), *output
        )


class ReproduceCommandTest(CommandTestMixin, SimpleTestCase):
    """Test the full pipeline command."""

    def write_config(self, **changes):
        data = {
            "scm": {"source": "file", "path": str(self.spec_path)},
            "n_exp": 20000,
            "n_obs": 20000,
            "threshold": 500,
            "models": ["rf", "gbdt"],
            "model_configs": {"rf": {"n_estimators": 3}, "gbdt": {"n_estimators": 4}},
            "seed": 11,
            "output": str(self.output / "run"),
        }
        data.update(changes)
        path = self.output / "run.json"
        path.write_text(json.dumps(data))
        return path

    def test_end_to_end(self):
        """Test every stage artifact and the echoed run config."""
        path = self.write_config()
        out = self.call("reproduce", "--config", str(path))
        self.assertIn("Run complete", out)
        run = self.output / "run"
        for name in ("scm.json", "informer.csv", "dataset.csv", "comparison.csv"):
            self.assertTrue((run / name).exists(), name)
        comparison = pd.read_csv(run / "comparison.csv")
        self.assertEqual(len(comparison), 4)
        echoed = json.loads((run / "run_config.json").read_text())
        self.assertEqual(echoed["seed"], 11)
        self.assertNotIn("workers", echoed)

    def test_rerun_is_byte_identical(self):
        """Test that a second run reuses every stage and changes no file."""
        path = self.write_config()
        self.call("reproduce", "--config", str(path))
        run = self.output / "run"
        before = {p: p.read_bytes() for p in run.rglob("*") if p.is_file()}
        self.call("reproduce", "--config", str(path), "--workers", "2")
        after = {p: p.read_bytes() for p in run.rglob("*") if p.is_file()}
        self.assertEqual(before, after)

    def test_fresh_runs_with_different_workers_match(self):
        """Test that fresh runs with one and two workers write identical files."""
        contents = {}
        for workers in ("1", "2"):
            run = self.output / f"run_{workers}"
            path = self.write_config(output=str(run))
            self.call("reproduce", "--config", str(path), "--workers", workers)
            contents[workers] = {
                p.relative_to(run).as_posix(): p.read_bytes() for p in run.rglob("*") if p.is_file()
            }
        self.assertIn("dataset.csv", contents["1"])
        self.assertIn("models/rf_lb.json", contents["1"])
        self.assertEqual(sorted(contents["1"]), sorted(contents["2"]))
        for name, data in contents["1"].items():
            self.assertEqual(data, contents["2"][name], name)

    def test_desk_preset_keeps_file_model_configs(self):
        """Test that the desk preset adds MLP settings under those from the file."""
        path = self.write_config(model_configs={"mlp_mish": {"epochs": 20}, "rf": {"max_depth": 3}})
        config = ReproduceCommand().run_config({"config": str(path), "desk_scale": True})
        self.assertEqual((config.n_exp, config.threshold), (2_000_000, 400))
        self.assertEqual(config.model_configs["mlp_mish"], {"hidden_sizes": [16, 8], "epochs": 20})
        self.assertEqual(config.model_configs["mlp_relu"]["epochs"], 300)
        self.assertEqual(config.model_configs["rf"], {"max_depth": 3})

    def test_flag_overrides(self):
        """Test that command-line flags override the file."""
        path = self.write_config()
        self.call("reproduce", "--config", str(path), "--seed", "12")
        echoed = json.loads((self.output / "run" / "run_config.json").read_text())
        self.assertEqual(echoed["seed"], 12)

    def test_bad_config(self):
        """Test that an invalid config is a data error."""
        path = self.write_config(n_exp=-5)
        self.assertExitCode(ExitCode.DATA, "reproduce", "--config", str(path))
        self.assertExitCode(
            ExitCode.DATA, "reproduce", "--config", str(self.output / "missing.json")
        )


@pytest.mark.slow
class DeskScaleReproduceTest(SimpleTestCase):
    """Test desk-scale runs on the reference model with seed 1."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.runs = {}
        for workers in ("4", "1"):
            run = Path(cls.tmp.name) / f"desk_{workers}"
            call_command(
                "reproduce",
                "--desk-scale",
                "--seed",
                "1",
                "--output",
                str(run),
                "--workers",
                workers,
                stdout=StringIO(),
                stderr=StringIO(),
            )
            cls.runs[workers] = run
        cls.run = cls.runs["4"]

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def test_dataset_and_reports(self):
        """Test that the run produces a usable dataset and every comparison row."""
        dataset = pd.read_csv(self.run / "dataset.csv")
        self.assertGreaterEqual(len(dataset), 500)
        comparison = pd.read_csv(self.run / "comparison.csv")
        self.assertEqual(len(comparison), 10)

    def test_mish_leads_on_both_bounds(self):
        """Test the MLP(Mish) error level and its lead over the other models."""
        comparison = pd.read_csv(self.run / "comparison.csv")
        mae = comparison.set_index(["Model", "Dataset"])["MAE"]
        for dataset in ("Lower bound", "Upper bound"):
            with self.subTest(dataset=dataset):
                mish = mae[("MLP(Mish)", dataset)]
                self.assertLessEqual(mish, 0.06)
                for rival in ("MLP(ReLU)", "RF", "GBDT"):
                    self.assertLess(mish, mae[(rival, dataset)], rival)

    def test_mish_training_loss_falls(self):
        """Test that the last epoch ends below the first for both bounds."""
        for label in ("lb", "ub"):
            document = json.loads(
                (self.run / "models" / f"mlp_mish_{label}.report.json").read_text()
            )
            losses = document["report"]["losses"]
            self.assertEqual(len(losses), 300)
            self.assertLessEqual(losses[-1], losses[0], label)

    def test_worker_count_does_not_change_files(self):
        """Test that fresh runs with four and one workers write identical files."""
        contents = {
            workers: {
                path.relative_to(run).as_posix(): path.read_bytes()
                for path in run.rglob("*")
                if path.is_file()
            }
            for workers, run in self.runs.items()
        }
        self.assertEqual(sorted(contents["4"]), sorted(contents["1"]))
        for name, data in contents["4"].items():
            self.assertEqual(data, contents["1"][name], name)
