import math
import unittest

import numpy as np

from qsdentropy.bloch import (BlochVector, PureAngle, bloch_to_rho, rho_to_bloch, purity, purity_from_rho,
                              constant_of_motion, project_to_ball, z_to_theta, theta_to_z)
from qsdentropy.errors import UnphysicalStateError, PureStateManifoldError, ConfigError
from qsdentropy.verify import random_bloch_points


class TestBlochToRho(unittest.TestCase):
    def test_maximally_mixed(self):
        np.testing.assert_allclose(bloch_to_rho((0, 0, 0)), 0.5 * np.eye(2))

    def test_north_pole(self):
        np.testing.assert_allclose(bloch_to_rho((0, 0, 1)), np.diag([1, 0]))

    def test_canonical_point(self):
        expected = 0.5 * np.array([[1.5, 0.5 - 0.5j], [0.5 + 0.5j, 0.5]])
        np.testing.assert_allclose(bloch_to_rho((0.5, 0.5, 0.5)), expected)

    def test_rejects_outside_ball(self):
        with self.assertRaises(UnphysicalStateError):
            bloch_to_rho((1.0, 0.1, 0.0))

    def test_unphysical_is_config_error(self):
        with self.assertRaises(ConfigError):
            bloch_to_rho((2.0, 0.0, 0.0))

    def test_hermitian_unit_trace(self):
        for r in random_bloch_points(200):
            rho = bloch_to_rho(r)
            np.testing.assert_allclose(rho, rho.conj().T, atol=1e-15)
            self.assertAlmostEqual(np.trace(rho).real, 1.0, places=14)

    def test_inverse(self):
        for r in random_bloch_points(50, seed=7):
            np.testing.assert_allclose(rho_to_bloch(bloch_to_rho(r)).as_array(), r, atol=1e-14)

    def test_rho_to_bloch_rejects_non_hermitian(self):
        with self.assertRaises(UnphysicalStateError):
            rho_to_bloch(np.array([[0.5, 1.0], [0.0, 0.5]]))

    def test_rho_to_bloch_rejects_bad_trace(self):
        with self.assertRaises(UnphysicalStateError):
            rho_to_bloch(np.eye(2))


class TestPurity(unittest.TestCase):
    def test_examples(self):
        self.assertAlmostEqual(purity((0, 0, 0)), 0.5)
        self.assertAlmostEqual(purity((0, 0, 1)), 1.0)
        self.assertAlmostEqual(purity((0.5, 0.5, 0.5)), 0.875)

    def test_matches_trace_of_square(self):
        for r in random_bloch_points(1000, seed=11):
            self.assertAlmostEqual(purity(r), purity_from_rho(bloch_to_rho(r)), delta=1e-12)


class TestConstantOfMotion(unittest.TestCase):
    def test_examples(self):
        self.assertAlmostEqual(constant_of_motion((0.5, 0.5, 0.5)), 2.0)
        self.assertAlmostEqual(constant_of_motion((0, 1, 0)), 1.0)
        self.assertAlmostEqual(constant_of_motion((0.1, 0.2, 0.3)), 22.5)

    def test_pure_state_manifold(self):
        with self.assertRaises(PureStateManifoldError):
            constant_of_motion((0.6, 0.0, 0.8))

    def test_accepts_bloch_vector(self):
        self.assertAlmostEqual(constant_of_motion(BlochVector(0.5, 0.5, 0.5)), 2.0)


class TestProjection(unittest.TestCase):
    def test_interior_untouched(self):
        r = np.array([0.3, -0.2, 0.5])
        np.testing.assert_array_equal(project_to_ball(r), r)

    def test_overshoot_renormalized(self):
        r = project_to_ball([0.0, 0.6, 0.81])
        self.assertAlmostEqual(float(np.sum(r * r)), 1.0, places=14)


class TestAngle(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(z_to_theta(1.0), 0.0)
        self.assertAlmostEqual(z_to_theta(0.0), math.pi / 2)
        self.assertAlmostEqual(z_to_theta(-1.0), math.pi)

    def test_round_trip(self):
        for z in np.linspace(-1.0, 1.0, 101):
            self.assertAlmostEqual(theta_to_z(z_to_theta(z)), z, delta=1e-12)

    def test_rejects_large_z(self):
        with self.assertRaises(UnphysicalStateError):
            z_to_theta(1.1)

    def test_pure_angle_range(self):
        with self.assertRaises(UnphysicalStateError):
            PureAngle(4.0)
        self.assertEqual(float(PureAngle(-1e-12)), 0.0)


if __name__ == '__main__':
    unittest.main()
