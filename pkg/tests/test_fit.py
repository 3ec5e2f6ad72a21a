import unittest
from unittest.mock import patch

import numpy as np

from src.pyotom.tools.bloch import PoolConstants, TissueParams, simulateFingerprint
from src.pyotom.tools.dataset import TissueRanges
from src.pyotom.tools.fit import FitConfig, FitResult, _Problem, _levenbergMarquardt, _startPoints, fitBloch, \
    fitVoxels, residual
from src.pyotom.tools.schedule import loadFixtureSchedule
from src.pyotom.utils.config import Config
from src.pyotom.utils.exceptions import DomainError
from src.pyotom.utils.rng import deriveSeeds

TRUTH = TissueParams(kmw=40.0, m0m=0.10, t2m=40e-6, t1w=1.5)


class TestFitConfig(unittest.TestCase):

    def test_validation(self):
        """Test impossible settings are refused."""
        with self.assertRaises(DomainError):
            FitConfig(n_starts=0)
        with self.assertRaises(DomainError):
            FitConfig(max_iterations=0)
        with self.assertRaises(DomainError):
            FitConfig(jacobian_step=0.5)

    def test_from_config(self):
        """Test settings come from the [fit], [tissue] and [bloch] sections."""
        config = FitConfig.fromConfig(Config(), n_starts=2, seed=None)
        self.assertEqual(config.n_starts, 2)
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.bounds, TissueRanges())
        self.assertEqual(config.consts, PoolConstants())

    def test_start_points(self):
        """Test starts fill the unit box and more starts extend fewer."""
        few = _startPoints(FitConfig(n_starts=3, seed=1))
        many = _startPoints(FitConfig(n_starts=25, seed=1))
        self.assertEqual(few.shape, (3, 4))
        self.assertEqual(many.shape, (25, 4))
        np.testing.assert_array_equal(many[:3], few)
        self.assertTrue(np.all(many >= 0) and np.all(many <= 1))


class TestLevenbergMarquardt(unittest.TestCase):

    def setUp(self):
        self.schedule = loadFixtureSchedule(20)
        self.fingerprint = simulateFingerprint(TRUTH, PoolConstants(), self.schedule)
        self.config = FitConfig()
        self.problem = _Problem(self.fingerprint, self.schedule.points, self.config)
        bounds = TissueRanges().bounds
        self.z_truth = (TRUTH.toArray() - bounds[:, 0]) / (bounds[:, 1] - bounds[:, 0])

    def test_residual_zero_at_truth(self):
        """Test the noiseless fingerprint has no residual at its own tissue."""
        np.testing.assert_array_equal(residual(TRUTH, self.fingerprint, self.schedule), np.zeros(20))

    def test_converged_at_exact_fit(self):
        """Test starting on an exact fit converges without iterating."""
        z, cost, iterations, converged = _levenbergMarquardt(self.problem, self.z_truth)
        self.assertTrue(converged)
        self.assertEqual(iterations, 0)
        self.assertLess(cost, 1e-25)

    def test_descent_from_perturbed_start(self):
        """Test iterations lower the cost from a perturbed start and stay in the box."""
        start = np.clip(self.z_truth + np.array([0.1, -0.1, 0.1, -0.1]), 0.0, 1.0)
        initial_cost = float(np.mean(self.problem.residuals(start)[0] ** 2))
        z, cost, iterations, _ = _levenbergMarquardt(self.problem, start)
        self.assertLess(cost, initial_cost)
        self.assertGreater(iterations, 0)
        self.assertTrue(np.all(z >= 0) and np.all(z <= 1))

    def test_jacobian_matches_differences(self):
        """Test the Jacobian columns against central differences away from the bounds."""
        z = np.array([0.4, 0.5, 0.3, 0.6])
        _, jacobian = self.problem.residualAndJacobian(z)
        self.assertEqual(jacobian.shape, (20, 4))
        for column in range(4):
            step = np.zeros(4)
            step[column] = 1e-6
            central = (self.problem.residuals(z + step)[0] - self.problem.residuals(z - step)[0]) / 2e-6
            np.testing.assert_allclose(jacobian[:, column], central, rtol=1e-2, atol=1e-6)

    def test_jacobian_at_upper_bound(self):
        """Test backward differences keep the Jacobian evaluation inside the box."""
        _, jacobian = self.problem.residualAndJacobian(np.ones(4))
        self.assertTrue(np.all(np.isfinite(jacobian)))


class TestFitBloch(unittest.TestCase):

    def setUp(self):
        self.schedule = loadFixtureSchedule(40)
        self.fingerprint = simulateFingerprint(TRUTH, PoolConstants(), self.schedule)

    def test_noiseless_fit(self):
        """Test a noiseless fingerprint is matched closely within the bounds."""
        result = fitBloch(self.fingerprint, self.schedule)
        self.assertIsInstance(result, FitResult)
        self.assertLess(result.residual_rms, 1e-3)
        self.assertEqual(len(result.start_costs), 10)
        self.assertEqual(result.cost, min(result.start_costs))
        self.assertAlmostEqual(result.residual_rms, np.sqrt(result.cost), places=15)
        bounds = TissueRanges().bounds
        values = result.params.toArray()
        self.assertTrue(np.all(values >= bounds[:, 0]) and np.all(values <= bounds[:, 1]))

    def test_more_starts_never_worse(self):
        """Test the best cost does not increase with the number of starts."""
        few = fitBloch(self.fingerprint, self.schedule, FitConfig(n_starts=2, max_iterations=20))
        more = fitBloch(self.fingerprint, self.schedule, FitConfig(n_starts=5, max_iterations=20))
        self.assertEqual(more.start_costs[:2], few.start_costs)
        self.assertLessEqual(more.cost, few.cost)

    def test_deterministic(self):
        """Test the same seed gives the same fit."""
        config = FitConfig(n_starts=2, max_iterations=20, seed=5)
        first = fitBloch(self.fingerprint, self.schedule, config)
        second = fitBloch(self.fingerprint, self.schedule, config)
        self.assertEqual(first.params, second.params)
        self.assertEqual(first.toJson(), second.toJson())

    def test_input_checks(self):
        """Test short schedules and mismatched fingerprints are refused."""
        short = self.schedule.points[:3]
        with self.assertRaises(DomainError):
            fitBloch(self.fingerprint[:3], short)
        with self.assertRaises(DomainError):
            fitBloch(self.fingerprint[:10], self.schedule)

    @patch("src.pyotom.tools.fit._logger")
    def test_iteration_limit_does_not_warn(self, mock_logger):
        """Test a fit stopped by the iteration limit after improving its starts stays quiet."""
        noisy = self.fingerprint + np.random.default_rng(0).normal(0.0, 0.05, 20)
        result = fitBloch(noisy, self.schedule, FitConfig(n_starts=2, max_iterations=2))
        self.assertLessEqual(result.iterations, 2)
        mock_logger.warning.assert_not_called()

    @patch("src.pyotom.tools.fit._logger")
    def test_warns_without_progress(self, mock_logger):
        """Test a fit that leaves every start where it was reports it."""
        def stuck(problem, z):
            return z, float(np.mean(problem.residuals(z)[0] ** 2)), 1, False

        with patch("src.pyotom.tools.fit._levenbergMarquardt", side_effect=stuck):
            result = fitBloch(self.fingerprint, self.schedule, FitConfig(n_starts=3, max_iterations=1))
        self.assertFalse(result.converged)
        mock_logger.warning.assert_called_once()
        self.assertIn("none of its 3 start(s)", mock_logger.warning.call_args[0][0])

    def test_result_json(self):
        """Test the result serializes its fields."""
        result = fitBloch(self.fingerprint, self.schedule, FitConfig(n_starts=1, max_iterations=5))
        data = result.toJson()
        self.assertEqual(set(data), {"params", "residual_rms", "iterations", "converged", "start_index", "cost",
                                     "start_costs"})
        self.assertEqual(set(data["params"]), {"kmw", "m0m", "t2m", "t1w"})


class TestFitVoxels(unittest.TestCase):

    def setUp(self):
        self.schedule = loadFixtureSchedule(10)
        tissues = TissueParams(np.array([20.0, 60.0, 90.0]), np.array([0.05, 0.1, 0.15]),
                               np.array([10e-6, 50e-6, 90e-6]), np.array([0.8, 1.6, 2.5]))
        self.fingerprints = simulateFingerprint(tissues, PoolConstants(), self.schedule)
        self.config = FitConfig(n_starts=2, max_iterations=15, seed=7)

    def test_voxels_use_their_own_seeds(self):
        """Test voxel i is the single fit seeded by its derived seed."""
        results = fitVoxels(self.fingerprints, self.schedule, self.config, deterministic=True)
        self.assertEqual(len(results), 3)
        seeds = deriveSeeds(7, np.arange(3), 1)[:, 0]
        for row, (result, seed) in enumerate(zip(results, seeds)):
            alone = fitBloch(self.fingerprints[row], self.schedule,
                             FitConfig(n_starts=2, max_iterations=15, seed=int(seed)))
            self.assertEqual(result.params, alone.params)

    def test_workers_do_not_change_results(self):
        """Test parallel voxel fits equal the single-worker ones."""
        serial = fitVoxels(self.fingerprints, self.schedule, self.config, deterministic=True)
        parallel = fitVoxels(self.fingerprints, self.schedule, self.config, workers=2)
        self.assertEqual([result.params for result in serial], [result.params for result in parallel])


if __name__ == "__main__":
    unittest.main()
