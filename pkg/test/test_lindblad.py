import math
import pickle
import unittest

import numpy as np
import sympy as sp

from qsdentropy.errors import ModelError
from qsdentropy.lindblad import (C_PLUS, C_MINUS, LindbladOperator, drift_increment, noise_increment,
                                 build_bloch_sde, raising_lowering_sde, weighted_sde, pure_state_sde, theta_sde,
                                 multiplicative_sde, parse_model, purity_drift_and_noise, purity_closed_forms, X, Z)
from qsdentropy import verify

POINT = np.array([0.5, 0.5, 0.5])


class TestIncrements(unittest.TestCase):
    def test_drift_north_pole_raising(self):
        np.testing.assert_allclose(drift_increment(np.diag([1, 0]), C_PLUS), np.diag([-1, 1]))

    def test_drift_south_pole_raising(self):
        np.testing.assert_allclose(drift_increment(np.diag([0, 1]), C_PLUS), np.zeros((2, 2)))

    def test_drift_mixed_lowering(self):
        np.testing.assert_allclose(drift_increment(0.5 * np.eye(2), C_MINUS), 0.5 * np.diag([1, -1]))

    def test_noise_mixed_raising(self):
        np.testing.assert_allclose(noise_increment(0.5 * np.eye(2), C_PLUS), 0.5 * np.array([[0, 1], [1, 0]]))

    def test_noise_north_pole_lowering(self):
        np.testing.assert_allclose(noise_increment(np.diag([1, 0]), C_MINUS), np.zeros((2, 2)))

    def test_zero_operator(self):
        rho = np.array([[0.7, 0.1 - 0.2j], [0.1 + 0.2j, 0.3]])
        np.testing.assert_allclose(noise_increment(rho, np.zeros((2, 2))), np.zeros((2, 2)))

    def test_weight_scales_rates(self):
        rho = np.diag([1.0, 0.0])
        np.testing.assert_allclose(drift_increment(rho, LindbladOperator(C_PLUS, 0.25)),
                                   0.25 * drift_increment(rho, C_PLUS))

    def test_negative_weight(self):
        with self.assertRaises(ModelError):
            LindbladOperator(C_PLUS, -1.0)


class TestBlochSde(unittest.TestCase):
    def setUp(self):
        self.system = raising_lowering_sde()

    def test_drift(self):
        np.testing.assert_allclose(self.system.drift(POINT), [-0.5, -0.5, -1.0], atol=1e-14)

    def test_noise(self):
        expected = [[0.25, 1.25], [-0.25, -0.25], [0.25, -0.75]]
        np.testing.assert_allclose(self.system.noise(POINT), expected, atol=1e-14)

    def test_diffusion(self):
        expected = [[0.8125, -0.1875, -0.4375], [-0.1875, 0.0625, 0.0625], [-0.4375, 0.0625, 0.3125]]
        np.testing.assert_allclose(self.system.diffusion(POINT), expected, atol=1e-14)

    def test_matches_matrix_projection(self):
        self.assertTrue(verify.check_lindblad_closed_forms().passed)

    def test_empty_operator_list(self):
        with self.assertRaises(ModelError):
            build_bloch_sde([])

    def test_weighted_pure_circle(self):
        gamma = 0.5
        system = weighted_sde(gamma)
        for z in (-0.7, 0.0, 0.4):
            x = math.sqrt(1.0 - z * z)
            r = np.array([x, 0.0, z])
            self.assertAlmostEqual(system.drift(r)[2], -(gamma + 2 * z), places=12)
            self.assertAlmostEqual(system.diffusion(r)[2, 2], (1 - z * z) * (1 + gamma * z + z * z), places=12)

    def test_weighted_zero_is_canonical(self):
        np.testing.assert_allclose(weighted_sde(0.0).noise(POINT), self.system.noise(POINT), atol=1e-14)

    def test_compiled_fields_match_entrywise(self):
        states = np.array([[0.5, 0.5, 0.5], [0.1, -0.3, 0.2]])
        noise = self.system.noise(states)
        self.assertEqual(noise.shape, (2, 3, 2))
        for i in range(3):
            np.testing.assert_allclose(self.system.drift(states)[:, i],
                                       self.system.evaluate(self.system.drift_expr[i, 0], states))
            for j in range(2):
                np.testing.assert_allclose(noise[:, i, j], self.system.evaluate(self.system.noise_expr[i, j], states))

    def test_pickled_copy_evaluates(self):
        copy = pickle.loads(pickle.dumps(self.system))
        np.testing.assert_allclose(copy.diffusion(POINT), self.system.diffusion(POINT), atol=1e-15)
        np.testing.assert_allclose(copy.drift(POINT), [-0.5, -0.5, -1.0], atol=1e-14)


class TestOneDimensionalModels(unittest.TestCase):
    def test_pure_z(self):
        system = pure_state_sde(0.0)
        self.assertAlmostEqual(system.drift(np.array([0.0]))[0], 0.0)
        self.assertAlmostEqual(system.noise(np.array([0.0]))[0, 0], math.sqrt(2.0))
        self.assertEqual(system.noise(np.array([1.0]))[0, 0], 0.0)
        self.assertEqual(system.noise(np.array([-1.0]))[0, 0], 0.0)

    def test_pure_z_clamps_negative_diffusion(self):
        self.assertEqual(pure_state_sde(0.0).noise(np.array([1.0 + 1e-9]))[0, 0], 0.0)

    def test_pure_z_gamma(self):
        system = pure_state_sde(0.5)
        self.assertAlmostEqual(system.drift(np.array([0.2]))[0], -0.9)
        self.assertAlmostEqual(system.diffusion(np.array([0.2]))[0, 0], 0.96 * 1.14)

    def test_gamma_range(self):
        with self.assertRaises(ModelError):
            pure_state_sde(2.0)
        with self.assertRaises(ModelError):
            weighted_sde(-2.5)

    def test_theta(self):
        system = theta_sde()
        for theta, drift, diffusion in [(math.pi / 2, 0.0, 1.0), (0.0, 0.0, 2.0), (math.pi / 4, 0.5, 1.5)]:
            point = np.array([theta])
            self.assertAlmostEqual(system.drift(point)[0], drift, places=14)
            self.assertAlmostEqual(system.diffusion(point)[0, 0], diffusion, places=14)

    def test_multiplicative(self):
        system = multiplicative_sde()
        self.assertAlmostEqual(system.drift(np.array([2.0]))[0], 2.0)
        self.assertAlmostEqual(system.diffusion(np.array([2.0]))[0, 0], 8.0)

    def test_ito_transform(self):
        self.assertTrue(verify.check_ito_theta_transform().passed)


class TestParseModel(unittest.TestCase):
    def test_names(self):
        self.assertEqual(parse_model("raising-lowering").name, "raising-lowering")
        self.assertEqual(parse_model("pure-theta").name, "pure-theta")
        self.assertEqual(parse_model("multiplicative").dimension, 1)

    def test_parameter_in_string(self):
        self.assertEqual(parse_model("pure-z:0.5").parameters["gamma"], 0.5)
        self.assertEqual(parse_model("weighted", gamma=0.25).parameters["gamma"], 0.25)

    def test_unknown(self):
        with self.assertRaises(ModelError):
            parse_model("harmonic")
        with self.assertRaises(ModelError):
            parse_model("pure-z:abc")


class TestPurity(unittest.TestCase):
    def test_closed_forms(self):
        drift, noise = purity_drift_and_noise(raising_lowering_sde())
        drift_closed, noise_closed = purity_closed_forms()
        self.assertEqual(sp.expand(drift - drift_closed), 0)
        for column in noise:
            self.assertEqual(sp.expand(column - noise_closed), 0)

    def test_drift_non_negative(self):
        drift_closed, _ = purity_closed_forms()
        value = drift_closed.subs({X: 0.5, Z: 0.5, sp.Symbol("y", real=True): 0.5})
        self.assertGreaterEqual(float(value), 0.0)


if __name__ == '__main__':
    unittest.main()
