"""
Unit tests for regression trees, random forests and gradient boosting.
"""

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from learning.trees import (
    LEAF,
    TreeEnsembleConfig,
    fit_tree,
    gbdt_fit,
    rf_fit,
)


def binary_rows(keys, n_features=5):
    return np.array([[(k >> i) & 1 for i in range(n_features)] for k in keys], dtype=np.float64)


class RegressionTreeTest(SimpleTestCase):
    """Test single tree growth."""

    def test_single_split(self):
        """Test a threshold halfway between the two values."""
        tree = fit_tree([[0.0], [1.0]], [0.0, 1.0], max_depth=3)
        self.assertEqual(tree.n_nodes, 3)
        self.assertEqual(tree.threshold[0], 0.5)
        self.assertEqual(tree.predict([[0.0], [1.0], [0.4]]).tolist(), [0.0, 1.0, 0.0])

    def test_depth_zero_is_a_leaf(self):
        """Test that depth 0 predicts the mean."""
        tree = fit_tree([[0.0], [1.0], [1.0]], [0.0, 0.3, 0.6], max_depth=0)
        self.assertEqual(tree.feature.tolist(), [LEAF])
        self.assertAlmostEqual(tree.value[0], 0.3)

    def test_constant_feature_gives_leaf(self):
        """Test that nothing splits when no feature varies."""
        tree = fit_tree(np.ones((4, 2)), [0.1, 0.2, 0.3, 0.4], max_depth=4)
        self.assertEqual(tree.n_nodes, 1)

    def test_depth_limit(self):
        """Test that trees never grow past max_depth."""
        x = binary_rows(range(32))
        y = np.random.default_rng(0).random(32)
        self.assertLessEqual(fit_tree(x, y, max_depth=3).depth(), 3)

    def test_serialisation(self):
        """Test that node arrays survive to_dict and from_dict."""
        x = binary_rows(range(16), 4)
        y = x[:, 0] * 0.5 + x[:, 2] * 0.25
        tree = fit_tree(x, y, max_depth=4)
        restored = type(tree).from_dict(tree.to_dict())
        self.assertTrue(np.array_equal(restored.predict(x), tree.predict(x)))

    def test_empty(self):
        """Test that no rows cannot be fitted."""
        with self.assertRaises(ValidationError):
            fit_tree(np.zeros((0, 2)), [], max_depth=2)


class RandomForestTest(SimpleTestCase):
    """Test forest fitting."""

    def setUp(self):
        self.x = binary_rows(range(32))
        self.y = np.random.default_rng(1).random(32)

    def test_depth_zero_without_bootstrap(self):
        """Test that stumps of the full data predict the label mean."""
        config = TreeEnsembleConfig.random_forest(
            n_features=5, n_estimators=5, max_depth=0, bootstrap=False
        )
        model, _ = rf_fit(self.x, self.y, config)
        np.testing.assert_allclose(model.predict(self.x), self.y.mean(), rtol=0, atol=1e-12)

    def test_deterministic_and_parallel(self):
        """Test equal forests for equal seeds, with one or two workers."""
        config = TreeEnsembleConfig.random_forest(n_features=5, n_estimators=6, seed=3)
        a, report = rf_fit(self.x, self.y, config)
        b, _ = rf_fit(self.x, self.y, config, workers=2)
        self.assertTrue(np.array_equal(a.predict(self.x), b.predict(self.x)))
        self.assertEqual(len(report.losses), 6)

    def test_predictions_in_unit_interval(self):
        """Test clamping of the averaged prediction."""
        config = TreeEnsembleConfig.random_forest(n_features=5, n_estimators=4, seed=1)
        model, _ = rf_fit(self.x, self.y, config)
        out = model.predict(self.x)
        self.assertTrue(np.all((out >= 0.0) & (out <= 1.0)))

    def test_rejects_bad_configs(self):
        """Test forest-specific validation."""
        with self.assertRaises(ValidationError):
            rf_fit(self.x, self.y, TreeEnsembleConfig.random_forest(n_estimators=0))
        with self.assertRaises(ValidationError):
            rf_fit(self.x, self.y, TreeEnsembleConfig.gbdt())
        with self.assertRaises(ValidationError):
            rf_fit(self.x, self.y[:5], TreeEnsembleConfig.random_forest())


class GradientBoostingTest(SimpleTestCase):
    """Test boosting."""

    def setUp(self):
        self.x = binary_rows(range(20))
        self.y = np.random.default_rng(2).random(20)

    def test_zero_rounds_predicts_mean(self):
        """Test that no rounds leave the initial constant."""
        model, report = gbdt_fit(self.x, self.y, TreeEnsembleConfig.gbdt(n_estimators=0))
        self.assertTrue(np.all(model.predict(self.x) == self.y.mean()))
        self.assertEqual(report.losses, [])

    def test_overfits_small_data(self):
        """Test that enough deep rounds memorise twenty records."""
        config = TreeEnsembleConfig.gbdt(n_estimators=300, max_depth=6, shrinkage=0.3)
        _, report = gbdt_fit(self.x, self.y, config)
        self.assertLess(report.final_mse, 1e-4)

    def test_losses_decrease(self):
        """Test non-increasing training loss without subsampling."""
        model, report = gbdt_fit(self.x, self.y, TreeEnsembleConfig.gbdt(n_estimators=30))
        self.assertEqual(len(model.trees), 30)
        self.assertTrue(all(b <= a + 1e-12 for a, b in zip(report.losses, report.losses[1:])))

    def test_subsampling_is_seeded(self):
        """Test that row subsampling depends only on the seed."""
        config = TreeEnsembleConfig.gbdt(n_estimators=10, subsample=0.5, seed=9)
        a, _ = gbdt_fit(self.x, self.y, config)
        b, _ = gbdt_fit(self.x, self.y, config)
        self.assertTrue(np.array_equal(a.raw_predict(self.x), b.raw_predict(self.x)))

    def test_rejects_bad_configs(self):
        """Test boosting-specific validation."""
        for overrides in ({"shrinkage": 0.0}, {"subsample": 1.5}, {"max_depth": -1}):
            with self.assertRaises(ValidationError):
                gbdt_fit(self.x, self.y, TreeEnsembleConfig.gbdt(**overrides))
        with self.assertRaises(ValidationError):
            gbdt_fit(self.x, self.y, TreeEnsembleConfig.random_forest())
