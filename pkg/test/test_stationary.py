import math
import unittest

import numpy as np

from qsdentropy.analysis import histogram_chi_square
from qsdentropy.errors import ConfigError
from qsdentropy.integrator import IntegratorConfig, run_trajectory, run_ensemble
from qsdentropy.lindblad import pure_state_sde, theta_sde, multiplicative_sde
from qsdentropy.stationary import (stationary_pdf_z, stationary_pdf_theta, stationary_pdf_multiplicative,
                                   stationary_boundary_term, stationary_drift_balance)
from qsdentropy.defaults import MULTIPLICATIVE_DP_LIMIT, CHI2_ALPHA
from qsdentropy import verify


class TestStationaryZ(unittest.TestCase):
    def setUp(self):
        self.pdf = stationary_pdf_z()

    def test_symmetric(self):
        self.assertAlmostEqual(self.pdf.mean(), 0.0, places=8)
        self.assertAlmostEqual(float(self.pdf.density(0.3)), float(self.pdf.density(-0.3)), places=14)

    def test_bins_sum_to_one(self):
        probabilities = self.pdf.bin_probabilities(np.linspace(-1.0, 1.0, 21))
        self.assertAlmostEqual(float(np.sum(probabilities)), 1.0, places=8)
        self.assertGreater(probabilities[0], probabilities[10])

    def test_normalization_matches_angle_frame(self):
        self.assertAlmostEqual(self.pdf.normalization, stationary_pdf_theta().normalization, places=10)

    def test_end_bins_match_angle_frame(self):
        theta_pdf = stationary_pdf_theta()
        upper = self.pdf.bin_probabilities([0.9, 1.0])[0]
        lower = self.pdf.bin_probabilities([-1.0, -0.9])[0]
        expected = theta_pdf.bin_probabilities([0.0, math.acos(0.9)])[0]
        self.assertAlmostEqual(upper, expected, places=10)
        self.assertAlmostEqual(lower, expected, places=10)

    def test_bins_outside_domain(self):
        with self.assertRaises(ConfigError):
            self.pdf.bin_probabilities([-1.5, 0.0, 1.0])

    def test_change_of_variables(self):
        theta_pdf = stationary_pdf_theta()
        for z in (-0.9, -0.2, 0.0, 0.5, 0.95):
            expected = float(theta_pdf.density(math.acos(z))) / math.sqrt(1.0 - z * z)
            self.assertAlmostEqual(float(self.pdf.density(z)), expected, delta=1e-8 * expected)


class TestStationaryTheta(unittest.TestCase):
    def setUp(self):
        self.pdf = stationary_pdf_theta()

    def test_unnormalized_values(self):
        self.assertAlmostEqual(float(self.pdf.unnormalized(math.pi / 2)), 1.0, places=14)
        self.assertAlmostEqual(float(self.pdf.unnormalized(0.0)), 2.0 ** -1.5, places=14)
        self.assertAlmostEqual(float(self.pdf.unnormalized(math.pi)), 2.0 ** -1.5, places=14)

    def test_normalized(self):
        self.assertAlmostEqual(self.pdf.integral(0.0, math.pi)[0] / self.pdf.normalization, 1.0, places=12)
        self.assertAlmostEqual(self.pdf.mean(), math.pi / 2, places=8)

    def test_drift_balance(self):
        self.assertAlmostEqual(stationary_drift_balance(self.pdf, lambda t: 0.5 * math.sin(2.0 * t)), 0.0, places=10)

    def test_entropy_balance(self):
        self.assertTrue(verify.check_stationary_balance().passed)


class TestStationaryMultiplicative(unittest.TestCase):
    def test_normalization(self):
        pdf = stationary_pdf_multiplicative()
        self.assertAlmostEqual(pdf.normalization, 1.0, places=8)

    def test_underflow_near_origin(self):
        self.assertEqual(float(stationary_pdf_multiplicative().density(1e-3)), 0.0)


class TestSimulatedSamples(unittest.TestCase):
    def test_theta_ensemble_matches_stationary_pdf(self):
        config = IntegratorConfig(dt=1e-2, steps=500, seed=61, record_stride=500)
        result = run_ensemble(theta_sde(), config, [1.0], 2000)
        fit = histogram_chi_square(result.final_states[:, 0], stationary_pdf_theta(), bin_width=0.2, thin=1)
        self.assertTrue(fit.passed(CHI2_ALPHA))

    def test_long_z_trajectory_matches_stationary_pdf(self):
        config = IntegratorConfig(dt=1e-2, steps=200000, seed=62)
        trajectory = run_trajectory(pure_state_sde(0.0), config, [0.0])
        fit = histogram_chi_square(trajectory.states[:, 0], stationary_pdf_z(), bin_width=0.2, thin=200)
        self.assertTrue(fit.passed(CHI2_ALPHA))


class TestBoundaryTerms(unittest.TestCase):
    def test_z(self):
        self.assertAlmostEqual(stationary_boundary_term(pure_state_sde(0.0), stationary_pdf_z()), 0.0, places=12)

    def test_theta(self):
        self.assertAlmostEqual(stationary_boundary_term(theta_sde(), stationary_pdf_theta()), 0.0, places=12)

    def test_multiplicative(self):
        value = stationary_boundary_term(multiplicative_sde(), stationary_pdf_multiplicative())
        self.assertAlmostEqual(value, MULTIPLICATIVE_DP_LIMIT, places=8)
        self.assertAlmostEqual(value, 2.0 / math.sqrt(math.pi), places=8)

    def test_all(self):
        self.assertTrue(verify.check_boundary_terms().passed)


if __name__ == '__main__':
    unittest.main()
