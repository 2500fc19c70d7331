"""
Unit tests for the exact subpopulation oracle.
"""

import itertools
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from bounds.formulas import check_consistency, identifiable_point_estimates, pns_bounds
from core.exceptions import ResourceBudgetError
from informer.oracle import (
    bits_to_key,
    cell_distributions,
    cell_experimental,
    cell_observational_joint,
    cell_pns,
    completion_weights,
    completions,
    enumerate_informer,
    features_to_keys,
    key_to_bits,
    keys_to_features,
    subpop_distributions,
    subpop_marginalize,
    subpop_true_bounds,
)
from informer.services import InformerService
from informer.tables import load_informer, meta_path, save_informer
from scm.mechanism import ExogenousAssignment, Regime, simulate_unit
from scm.spec import ScmSpec, paper_scm, random_scm, save_spec


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


def single_feature_spec(**changes):
    fields = dict(
        n_features=1,
        n_observed=1,
        mx_coeffs=[0.0],
        my_coeffs=[-0.2],
        c_y=0.7,
        pz=[0.5],
        p_ux=0.5,
        p_uy=0.3,
    )
    fields.update(changes)
    return ScmSpec(**fields)


def brute_force(spec, key):
    """
    Enumerate every exogenous configuration consistent with ``key`` and
    simulate each regime unit by unit.
    """
    observed = key_to_bits(key, spec.n_observed)
    totals = {"mass": 0.0, "y1": 0.0, "y0": 0.0, "pns": 0.0, "pn": 0.0, "ps": 0.0}
    joint = np.zeros((2, 2))
    for hidden in itertools.product((0, 1), repeat=spec.n_unobserved):
        uz = observed + hidden
        p_z = np.prod([p if bit else 1.0 - p for bit, p in zip(uz, spec.pz)])
        for ux, uy in itertools.product((0, 1), (0, 1)):
            p = p_z * (spec.p_ux if ux else 1.0 - spec.p_ux)
            p *= spec.p_uy if uy else 1.0 - spec.p_uy
            exo = ExogenousAssignment(uz=uz, ux=ux, uy=uy)
            natural = simulate_unit(spec, exo)
            y1 = simulate_unit(spec, exo, Regime.DO_X1).y
            y0 = simulate_unit(spec, exo, Regime.DO_X0).y
            complier = y1 == 1 and y0 == 0
            totals["mass"] += p
            totals["y1"] += p * y1
            totals["y0"] += p * y0
            totals["pns"] += p * complier
            totals["pn"] += p * (complier and natural.x == 1)
            totals["ps"] += p * (complier and natural.x == 0)
            joint[natural.x, natural.y] += p
    mass = totals.pop("mass")
    return {name: value / mass for name, value in totals.items()}, joint / mass


class KeyLayoutTest(SimpleTestCase):
    """Test subpopulation keys and completion ordering."""

    def test_little_endian_keys(self):
        """Test that z1 is the least significant bit."""
        self.assertEqual(key_to_bits(1, 3), (1, 0, 0))
        self.assertEqual(key_to_bits(6, 3), (0, 1, 1))
        self.assertEqual(bits_to_key((1, 0, 1)), 5)

    def test_vectorised_keys(self):
        """Test the matrix form of the key layout."""
        keys = np.arange(8)
        features = keys_to_features(keys, 3)
        self.assertEqual(features[6].tolist(), [0, 1, 1])
        self.assertEqual(features_to_keys(features).tolist(), keys.tolist())

    def test_key_out_of_range(self):
        """Test rejection of keys and bits outside the layout."""
        with self.assertRaises(ValidationError):
            key_to_bits(8, 3)
        with self.assertRaises(ValidationError):
            bits_to_key((0, 2))

    def test_big_endian_completions(self):
        """Test that completions count up with the first hidden feature as MSB."""
        self.assertEqual(completions(toy_spec()).tolist(), [[0, 0], [0, 1], [1, 0], [1, 1]])

    def test_completion_weights(self):
        """Test completion probabilities."""
        weights = completion_weights(toy_spec())
        self.assertAlmostEqual(weights.sum(), 1.0, places=12)
        self.assertAlmostEqual(weights[1], 0.8 * 0.7, places=12)
        degenerate = completion_weights(toy_spec(pz=[0.3, 0.6, 0.5, 0.0, 0.0]))
        self.assertEqual(degenerate.tolist(), [1.0, 0.0, 0.0, 0.0])

    def test_reference_completion_count(self):
        """Test 5 hidden features give 32 completions."""
        self.assertEqual(len(completions(paper_scm())), 32)


class CellTest(SimpleTestCase):
    """Test exact quantities of a single cell."""

    def test_cell_pns(self):
        """Test the hand-evaluated responder probability."""
        self.assertAlmostEqual(cell_pns(single_feature_spec(), [1]), 0.7, places=12)

    def test_no_treatment_effect(self):
        """Test that c_y = 0 means nobody responds to treatment."""
        spec = toy_spec(c_y=0.0)
        for cell in itertools.product((0, 1), repeat=5):
            self.assertEqual(cell_pns(spec, list(cell)), 0.0)

    def test_cell_experimental(self):
        """Test P(y | do(x)) in a cell."""
        spec = single_feature_spec()
        self.assertAlmostEqual(cell_experimental(spec, [1], 1), 1.0, places=12)
        self.assertAlmostEqual(cell_experimental(spec, [1], 0), 0.3, places=12)
        with self.assertRaises(ValidationError):
            cell_experimental(spec, [1], 2)

    def test_degenerate_outcome_noise(self):
        """Test that P(U_Y=1) = 0 gives the deterministic outcome."""
        spec = single_feature_spec(p_uy=0.0)
        self.assertEqual(cell_experimental(spec, [1], 1), 1.0)
        self.assertEqual(cell_experimental(spec, [1], 0), 0.0)

    def test_degenerate_joint(self):
        """Test that deterministic noise puts all mass in one cell."""
        spec = toy_spec(p_ux=1.0, p_uy=1.0)
        joint = cell_observational_joint(spec, [1, 0, 1, 0, 1])
        self.assertEqual(sorted(joint.reshape(-1).tolist()), [0.0, 0.0, 0.0, 1.0])

    def test_cell_distributions_are_consistent(self):
        """Test every cell of the toy model passes the consistency check."""
        spec = toy_spec()
        for cell in itertools.product((0, 1), repeat=5):
            pair = cell_distributions(spec, list(cell)).distribution_pair()
            self.assertTrue(check_consistency(pair).ok)

    def test_wrong_cell_length(self):
        """Test that partial cells are rejected."""
        with self.assertRaises(ValidationError):
            cell_pns(toy_spec(), [0, 1])


class SubpopulationTest(SimpleTestCase):
    """Test marginalisation over hidden features."""

    def setUp(self):
        self.spec = toy_spec()

    def test_constant_cell_function(self):
        """Test that weights sum to one."""
        total = subpop_marginalize(self.spec, 3, lambda cell: 1.0)
        self.assertAlmostEqual(total, 1.0, places=12)

    def test_degenerate_weights(self):
        """Test that zero hidden probabilities select the all-zero completion."""
        spec = toy_spec(pz=[0.3, 0.6, 0.5, 0.0, 0.0])
        value = subpop_marginalize(spec, 5, lambda cell: cell_pns(spec, cell))
        self.assertEqual(value, cell_pns(spec, [1, 0, 1, 0, 0]))

    def test_array_cell_function(self):
        """Test marginalising a 2x2 table."""
        joint = subpop_marginalize(
            self.spec, 2, lambda cell: cell_observational_joint(self.spec, cell)
        )
        self.assertEqual(joint.shape, (2, 2))
        self.assertAlmostEqual(joint.sum(), 1.0, places=12)

    def test_matches_brute_force(self):
        """Test against exhaustive exogenous enumeration."""
        for spec in (self.spec, random_scm(4, n_features=6, n_observed=3)):
            for key in range(spec.n_subpopulations):
                exact = subpop_distributions(spec, key)
                expected, joint = brute_force(spec, key)
                self.assertAlmostEqual(exact.p_y_do_x1, expected["y1"], delta=1e-12)
                self.assertAlmostEqual(exact.p_y_do_x0, expected["y0"], delta=1e-12)
                self.assertAlmostEqual(exact.pns, expected["pns"], delta=1e-12)
                np.testing.assert_allclose(exact.joint, joint, atol=1e-12, rtol=0)

    def test_oracle_inside_bounds(self):
        """Test lb <= exact PNS <= ub for every toy subpopulation."""
        for key in range(self.spec.n_subpopulations):
            bounds = subpop_true_bounds(self.spec, key)
            pns = subpop_distributions(self.spec, key).pns
            self.assertLessEqual(bounds.lb, pns + 1e-12)
            self.assertLessEqual(pns, bounds.ub + 1e-12)

    def test_degenerate_model_identifies_pns(self):
        """Test that a deterministic model has lb = ub = PNS."""
        spec = toy_spec(pz=[1.0, 0.0, 1.0, 0.0, 1.0], p_ux=0.0, p_uy=1.0)
        for key in range(spec.n_subpopulations):
            bounds = subpop_true_bounds(spec, key)
            pns = subpop_distributions(spec, key).pns
            self.assertEqual(bounds.lb, pns)
            self.assertEqual(bounds.ub, pns)


class MonotonicIdentificationTest(SimpleTestCase):
    """Test the point formulas on a model where treatment never prevents Y."""

    def setUp(self):
        # y under x' is 0 whenever z2 = 0; with z2 = 1 every unit with
        # y under x' = 1 also has y under x = 1.
        self.spec = ScmSpec(
            n_features=3,
            n_observed=2,
            mx_coeffs=[0.31, -0.17, 0.43],
            my_coeffs=[0.0, -0.3, 0.0],
            c_y=0.5,
            pz=[0.4, 0.5, 0.6],
            p_ux=0.45,
            p_uy=0.35,
        )

    def test_formulas_equal_enumeration(self):
        """Test PNS, PN and PS formulas against exhaustive enumeration."""
        for key in range(self.spec.n_subpopulations):
            pair = subpop_distributions(self.spec, key).distribution_pair()
            expected, _ = brute_force(self.spec, key)
            estimates = identifiable_point_estimates(pair)
            self.assertAlmostEqual(estimates.pns, expected["pns"], delta=1e-12)
            self.assertAlmostEqual(estimates.pn, expected["pn"] / pair.p_x_y, delta=1e-12)
            self.assertAlmostEqual(
                estimates.ps, expected["ps"] / pair.p_xprime_yprime, delta=1e-12
            )
            self.assertAlmostEqual(pns_bounds(pair).lb, estimates.pns, delta=1e-12)


class InformerTableTest(SimpleTestCase):
    """Test enumeration and persistence of the full table."""

    def test_toy_table(self):
        """Test row count, ordering and columns."""
        table = enumerate_informer(toy_spec())
        self.assertEqual(len(table), 8)
        self.assertEqual(table.keys.tolist(), list(range(8)))
        self.assertEqual(table.features().shape, (8, 3))
        self.assertTrue(np.all(table.labels("lb") <= table.labels("ub") + 1e-12))
        row, single = table.distributions(5), subpop_distributions(toy_spec(), 5)
        self.assertAlmostEqual(row.pns, single.pns, delta=1e-15)
        np.testing.assert_allclose(row.joint, single.joint, atol=1e-15, rtol=0)

    def test_alternative_quantities(self):
        """Test PN and PS bound columns."""
        table = enumerate_informer(toy_spec())
        pn_lb = table.labels("lb", "pn")
        defined = ~np.isnan(pn_lb)
        self.assertTrue(defined.any())
        self.assertTrue(np.all(pn_lb[defined] >= 0.0))
        with self.assertRaises(ValidationError):
            table.labels("lb", "pq")
        with self.assertRaises(ValidationError):
            table.labels("mid")

    def test_budget(self):
        """Test that an oversized table fails before any work."""
        with self.assertRaises(ResourceBudgetError):
            enumerate_informer(toy_spec(), max_rows=4)

    def test_workers_do_not_change_the_table(self):
        """Test parallel enumeration over several key blocks."""
        spec = random_scm(9, n_features=13, n_observed=11)
        serial = enumerate_informer(spec, workers=1)
        parallel = enumerate_informer(spec, workers=2)
        pd.testing.assert_frame_equal(serial.frame, parallel.frame, check_exact=True)

    def test_round_trip_is_exact(self):
        """Test that saving and loading keeps every bit."""
        table = enumerate_informer(toy_spec())
        with tempfile.TemporaryDirectory() as tmp:
            path = save_informer(table, Path(tmp) / "informer.csv")
            self.assertTrue(meta_path(path).exists())
            loaded = load_informer(path)
            self.assertEqual(loaded.spec_hash, toy_spec().identity_hash())
            pd.testing.assert_frame_equal(loaded.frame, table.frame, check_exact=True)
            again = save_informer(loaded, Path(tmp) / "again.csv")
            self.assertEqual(path.read_bytes(), again.read_bytes())

    def test_missing_sidecar(self):
        """Test that a table without its sidecar is rejected."""
        with tempfile.TemporaryDirectory() as tmp:
            path = save_informer(enumerate_informer(toy_spec()), Path(tmp) / "t.csv")
            meta_path(path).unlink()
            with self.assertRaises(FileNotFoundError):
                load_informer(path)

    def test_reference_sweep(self):
        """Test every reference-model subpopulation: exact PNS inside its bounds, no violations."""
        table = enumerate_informer(paper_scm())
        frame = table.frame
        self.assertEqual(len(table), 32768)
        self.assertTrue(np.all(frame["lb"] <= frame["pns"] + 1e-12))
        self.assertTrue(np.all(frame["pns"] <= frame["ub"] + 1e-12))
        for key in (0, 1, 12345, 32767):
            pair = table.distributions(key).distribution_pair()
            self.assertTrue(check_consistency(pair).ok)
        joint = frame[["p_x1y1", "p_x1y0", "p_x0y1", "p_x0y0"]].sum(axis=1)
        np.testing.assert_allclose(joint, 1.0, atol=1e-12)


class InformerServiceTest(SimpleTestCase):
    """Test the cached informer stage."""

    def test_second_build_uses_cache(self):
        """Test that an unchanged spec is not recomputed."""
        with tempfile.TemporaryDirectory() as tmp:
            spec_path = save_spec(toy_spec(), Path(tmp) / "scm.json")
            service = InformerService(tmp)
            table, _ = service.build(spec_path)
            first = service.table_path.read_bytes()
            with self.assertLogs("core.manifests", level="INFO") as logs:
                again, _ = service.build(spec_path)
            self.assertTrue(any("skipped via cache" in line for line in logs.output))
            self.assertEqual(service.table_path.read_bytes(), first)
            self.assertEqual(len(again), len(table))
