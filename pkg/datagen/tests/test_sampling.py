"""
Unit tests for seeded sampling and counter snapshots.
"""

import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from core.exceptions import SpecMismatchError
from datagen.sampling import (
    BLOCK_SIZE,
    SampleCounters,
    SampleRegime,
    block_length,
    emit_raw_samples,
    generate_counters,
    load_counters,
    merge_counters,
    n_blocks,
    partial_counters,
    partition_blocks,
    save_counters,
)
from datagen.services import SamplingService
from informer.oracle import enumerate_informer, features_to_keys
from scm.spec import ScmSpec, random_scm, save_spec


def toy_spec(**changes):
    fields = dict(
        n_features=5,
        n_observed=3,
        mx_coeffs=[0.41, -0.29, 0.23, 0.53, -0.61],
        my_coeffs=[-0.23, 0.31, 0.57, -0.41, 0.13],
        c_y=0.73,
        pz=[0.3, 0.6, 0.5, 0.2, 0.7],
        p_ux=0.4,
        p_uy=0.3,
    )
    fields.update(changes)
    return ScmSpec(**fields)


class BlockLayoutTest(SimpleTestCase):
    """Test how samples are cut into blocks."""

    def test_block_counts(self):
        """Test block count and the short final block."""
        n = 2 * BLOCK_SIZE + 10
        self.assertEqual(n_blocks(n), 3)
        self.assertEqual(block_length(n, 0), BLOCK_SIZE)
        self.assertEqual(block_length(n, 2), 10)
        self.assertEqual(n_blocks(0), 0)

    def test_partition_covers_every_block(self):
        """Test contiguous, non-overlapping block ranges."""
        ranges = partition_blocks(10 * BLOCK_SIZE, 4)
        self.assertEqual(ranges[0][0], 0)
        self.assertEqual(ranges[-1][1], 10)
        for (_, stop), (start, _) in zip(ranges, ranges[1:]):
            self.assertEqual(stop, start)

    def test_partition_never_exceeds_blocks(self):
        """Test that more workers than blocks collapse to one range per block."""
        self.assertEqual(len(partition_blocks(BLOCK_SIZE + 1, 8)), 2)


class GenerateCountersTest(SimpleTestCase):
    """Test Monte-Carlo counter generation."""

    def setUp(self):
        self.spec = toy_spec()

    def test_zero_samples(self):
        """Test that no samples give all-zero counters."""
        counters = generate_counters(self.spec, 0, SampleRegime.OBSERVATIONAL, seed=1)
        self.assertEqual(counters.counts.shape, (8, 2, 2))
        self.assertEqual(int(counters.counts.sum()), 0)

    def test_negative_samples(self):
        """Test rejection of a negative sample count."""
        with self.assertRaises(ValidationError):
            generate_counters(self.spec, -1, SampleRegime.OBSERVATIONAL, seed=1)

    def test_unknown_regime(self):
        """Test rejection of an unknown regime."""
        with self.assertRaises(ValidationError):
            generate_counters(self.spec, 10, "natural", seed=1)

    def test_totals_add_up(self):
        """Test that every sample is counted once."""
        counters = generate_counters(self.spec, 5000, SampleRegime.EXPERIMENTAL, seed=3)
        self.assertEqual(int(counters.counts.sum()), 5000)
        self.assertEqual(counters.n_samples, 5000)
        self.assertEqual(int(counters.totals().sum()), 5000)

    def test_same_seed_same_counts(self):
        """Test determinism for a fixed seed."""
        a = generate_counters(self.spec, 3000, SampleRegime.OBSERVATIONAL, seed=5)
        b = generate_counters(self.spec, 3000, SampleRegime.OBSERVATIONAL, seed=5)
        self.assertEqual(a, b)
        c = generate_counters(self.spec, 3000, SampleRegime.OBSERVATIONAL, seed=6)
        self.assertNotEqual(a, c)

    def test_regimes_use_separate_streams(self):
        """Test that the two regimes do not share random numbers."""
        obs = generate_counters(self.spec, 3000, SampleRegime.OBSERVATIONAL, seed=5)
        exp = generate_counters(self.spec, 3000, SampleRegime.EXPERIMENTAL, seed=5)
        self.assertFalse(np.array_equal(obs.totals(), exp.totals()))

    def test_workers_do_not_change_counts(self):
        """Test identical counters for one and several workers, with a partial block."""
        n = 3 * BLOCK_SIZE + 17
        serial = generate_counters(self.spec, n, SampleRegime.EXPERIMENTAL, seed=8, workers=1)
        parallel = generate_counters(self.spec, n, SampleRegime.EXPERIMENTAL, seed=8, workers=3)
        self.assertEqual(serial, parallel)

    def test_prefix_property(self):
        """Test that a longer run extends a shorter one block by block."""
        short = generate_counters(self.spec, BLOCK_SIZE, SampleRegime.OBSERVATIONAL, seed=2)
        head = partial_counters(
            self.spec, 2 * BLOCK_SIZE, SampleRegime.OBSERVATIONAL, seed=2, start=0, stop=1
        )
        self.assertTrue(np.array_equal(short.counts, head.counts))

    def test_merge_of_substreams(self):
        """Test that merging block ranges equals a single stream."""
        n = 4 * BLOCK_SIZE
        full = generate_counters(self.spec, n, SampleRegime.OBSERVATIONAL, seed=4)
        merged = None
        for start, stop in partition_blocks(n, 4):
            part = partial_counters(
                self.spec, n, SampleRegime.OBSERVATIONAL, 4, start, stop
            )
            merged = part if merged is None else merge_counters(merged, part)
        self.assertEqual(merged, full)
        self.assertEqual(merged.seed, 4)

    def test_merge_rejects_other_models(self):
        """Test that counters of different SCMs or regimes cannot be merged."""
        a = generate_counters(self.spec, 100, SampleRegime.OBSERVATIONAL, seed=1)
        b = generate_counters(random_scm(1, n_features=5, n_observed=3), 100, "observational", 1)
        with self.assertRaises(SpecMismatchError):
            merge_counters(a, b)
        c = generate_counters(self.spec, 100, SampleRegime.EXPERIMENTAL, seed=1)
        with self.assertRaises(SpecMismatchError):
            merge_counters(a, c)

    def test_degenerate_model(self):
        """Test that a deterministic model puts every sample in one cell."""
        spec = toy_spec(pz=[1.0, 0.0, 1.0, 0.0, 1.0], p_ux=1.0, p_uy=0.0)
        counters = generate_counters(spec, 1000, SampleRegime.OBSERVATIONAL, seed=9)
        self.assertEqual(np.count_nonzero(counters.counts), 1)
        self.assertEqual(int(counters.counts[0b101].sum()), 1000)

    def test_randomised_treatment(self):
        """Test that the experimental regime treats about half of the units."""
        n = 200_000
        counters = generate_counters(self.spec, n, SampleRegime.EXPERIMENTAL, seed=10)
        treated = int(counters.counts[:, 1, :].sum())
        self.assertLess(abs(treated - n / 2), 5 * np.sqrt(n / 4))

    def test_estimates_converge(self):
        """Test empirical distributions against the exact oracle."""
        n = 400_000
        exp = generate_counters(self.spec, n, SampleRegime.EXPERIMENTAL, seed=11)
        obs = generate_counters(self.spec, n, SampleRegime.OBSERVATIONAL, seed=12)
        frame = enumerate_informer(self.spec).frame
        for key in range(8):
            e, o = exp.counts[key], obs.counts[key]
            if min(e[1].sum(), e[0].sum(), o.sum()) < 10_000:
                continue
            row = frame.iloc[key]
            self.assertAlmostEqual(e[1, 1] / e[1].sum(), row["p_y_do_x1"], delta=0.02)
            self.assertAlmostEqual(e[0, 1] / e[0].sum(), row["p_y_do_x0"], delta=0.02)
            self.assertAlmostEqual(o[1, 1] / o.sum(), row["p_x1y1"], delta=0.02)
            self.assertAlmostEqual(o[0, 0] / o.sum(), row["p_x0y0"], delta=0.02)

    def test_key_frequencies_match_feature_probabilities(self):
        """Test routed counts against P(key) within three standard errors."""
        n = 100_000
        counters = generate_counters(self.spec, n, SampleRegime.OBSERVATIONAL, seed=13)
        for key in range(8):
            bits = [(key >> i) & 1 for i in range(3)]
            p = np.prod([pz if bit else 1 - pz for bit, pz in zip(bits, self.spec.pz[:3])])
            sigma = np.sqrt(n * p * (1 - p))
            self.assertLess(abs(counters.totals()[key] - n * p), 3.5 * sigma + 1)


class CounterSnapshotTest(SimpleTestCase):
    """Test counter persistence and raw sample emission."""

    def setUp(self):
        self.spec = toy_spec()
        self.counters = generate_counters(self.spec, 20_000, SampleRegime.EXPERIMENTAL, seed=21)

    def test_round_trip(self):
        """Test that load restores the counters exactly."""
        with tempfile.TemporaryDirectory() as tmp:
            path = save_counters(self.counters, Path(tmp) / "c.csv", n_observed=3)
            loaded = load_counters(path)
            self.assertEqual(loaded, self.counters)
            self.assertEqual(loaded.seed, 21)
            again = save_counters(loaded, Path(tmp) / "d.csv", n_observed=3)
            self.assertEqual(path.read_bytes(), again.read_bytes())

    def test_snapshot_lists_non_zero_cells(self):
        """Test the CSV layout."""
        with tempfile.TemporaryDirectory() as tmp:
            path = save_counters(self.counters, Path(tmp) / "c.csv", n_observed=3)
            frame = pd.read_csv(path)
            self.assertEqual(list(frame.columns), ["key", "regime", "x", "y", "count"])
            self.assertTrue((frame["count"] > 0).all())
            self.assertEqual(int(frame["count"].sum()), 20_000)

    def test_empty_snapshot(self):
        """Test saving and loading zero samples."""
        empty = SampleCounters.zeros(self.spec, SampleRegime.OBSERVATIONAL, seed=0)
        with tempfile.TemporaryDirectory() as tmp:
            loaded = load_counters(save_counters(empty, Path(tmp) / "e.csv", n_observed=3))
            self.assertEqual(loaded, empty)

    def test_missing_sidecar(self):
        """Test that a snapshot without its sidecar is rejected."""
        with tempfile.TemporaryDirectory() as tmp:
            path = save_counters(self.counters, Path(tmp) / "c.csv", n_observed=3)
            Path(str(path) + ".meta.json").unlink()
            with self.assertRaises(FileNotFoundError):
                load_counters(path)

    def test_raw_samples_match_counters(self):
        """Test that the audit dump holds exactly the counted samples."""
        n = BLOCK_SIZE + 500
        counters = generate_counters(self.spec, n, SampleRegime.OBSERVATIONAL, seed=22)
        with tempfile.TemporaryDirectory() as tmp:
            path = emit_raw_samples(
                self.spec, n, SampleRegime.OBSERVATIONAL, 22, Path(tmp) / "r.csv"
            )
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ["regime", "x", "y", "z1", "z2", "z3"])
        self.assertEqual(len(frame), n)
        keys = features_to_keys(frame[["z1", "z2", "z3"]].to_numpy())
        cells = keys * 4 + frame["x"].to_numpy() * 2 + frame["y"].to_numpy()
        recount = np.bincount(cells, minlength=32).reshape(8, 2, 2)
        self.assertTrue(np.array_equal(recount, counters.counts))


class SamplingServiceTest(SimpleTestCase):
    """Test the cached sampling stage."""

    def test_stage_seed_and_cache(self):
        """Test that a rerun reuses the snapshot and a new seed recomputes it."""
        with tempfile.TemporaryDirectory() as tmp:
            spec_path = save_spec(toy_spec(), Path(tmp) / "scm.json")
            service = SamplingService(tmp)
            first, _ = service.sample(spec_path, "observational", 5000, seed=1)
            with self.assertLogs("core.manifests", level="INFO") as logs:
                again, _ = service.sample(spec_path, "observational", 5000, seed=1)
            self.assertTrue(any("skipped via cache" in line for line in logs.output))
            self.assertEqual(first, again)
            other, _ = service.sample(spec_path, "observational", 5000, seed=2)
            self.assertNotEqual(first, other)

    def test_emit_raw(self):
        """Test the optional raw sample file."""
        with tempfile.TemporaryDirectory() as tmp:
            spec_path = save_spec(toy_spec(), Path(tmp) / "scm.json")
            SamplingService(tmp).sample(
                spec_path, "experimental", 1000, seed=1, emit_raw="raw.csv"
            )
            self.assertEqual(len(pd.read_csv(Path(tmp) / "raw.csv")), 1000)
