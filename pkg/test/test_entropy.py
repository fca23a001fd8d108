import math
import unittest

import numpy as np
import sympy as sp

from qsdentropy.analysis import is_nondecreasing_trend, ks_two_sample, standard_error, within_standard_errors
from qsdentropy.defaults import KS_ALPHA
from qsdentropy.entropy import (EntropyLedger, ds_env_z, ds_env_theta, ds_env_general, z_entropy_coefficients,
                                theta_entropy_coefficients, closed_form_increment_z, environmental_entropy,
                                make_entropy_increment, attach_entropy, attach_system_entropy,
                                closed_form_increment_theta)
from qsdentropy.errors import SingularityError, SingularDiffusionError, ConfigError, NumericalError
from qsdentropy.fokker_planck import Pdf1DGrid, uniform_edges
from qsdentropy.integrator import IntegratorConfig, run_trajectory, run_ensemble
from qsdentropy.lindblad import pure_state_sde, theta_sde, raising_lowering_sde
from qsdentropy.reduction import reduce
from qsdentropy.sde_system import SdeSystem
from qsdentropy import verify


class TestClosedFormZ(unittest.TestCase):
    def test_origin(self):
        self.assertAlmostEqual(ds_env_z(0.0, 0.0, 1e-3), -2e-3, places=15)

    def test_singular_near_poles(self):
        with self.assertRaises(SingularityError):
            ds_env_z(1.0, 0.0, 1e-3)
        with self.assertRaises(SingularityError):
            ds_env_z(-1.0 + 1e-8, 0.0, 1e-3)

    def test_vectorized_flags_poles(self):
        values, flagged = closed_form_increment_z(np.array([[0.0], [1.0]]), np.zeros((2, 1)), 1e-3)
        np.testing.assert_array_equal(flagged, [False, True])
        self.assertEqual(values[1], 0.0)

    def test_noise_coefficient_changes_sign(self):
        _, noise = z_entropy_coefficients(np.array([0.5, 0.8]))
        self.assertLess(noise[0], 0.0)
        self.assertGreater(noise[1], 0.0)


class TestClosedFormTheta(unittest.TestCase):
    def test_equator(self):
        self.assertAlmostEqual(ds_env_theta(math.pi / 2, 0.0, 1e-3), -3e-3, places=15)

    def test_pole(self):
        self.assertAlmostEqual(ds_env_theta(0.0, 0.0, 1e-3), 3e-3, places=15)

    def test_mid_angle_along_drift(self):
        dt = 1e-3
        self.assertAlmostEqual(ds_env_theta(math.pi / 4, 0.5 * dt, dt), 1.5 * dt, places=15)

    def test_finite_everywhere(self):
        drift, noise = theta_entropy_coefficients(np.linspace(0.0, math.pi, 1001))
        self.assertTrue(np.all(np.isfinite(drift)))
        self.assertTrue(np.all(np.isfinite(noise)))


class TestGeneral(unittest.TestCase):
    def test_matches_closed_forms(self):
        self.assertTrue(verify.check_entropy_consistency().passed)

    def test_mutated_coefficients_detected(self):
        def flipped(z):
            drift, noise = z_entropy_coefficients(z)
            return -drift, noise

        self.assertFalse(verify.check_entropy_consistency(z_coefficients=flipped).passed)

    def test_general_single_step(self):
        system = theta_sde()
        value = ds_env_general(system, None, [math.pi / 2], [0.0], 1e-3)
        self.assertAlmostEqual(value, -3e-3, places=12)

    def test_singular_system(self):
        with self.assertRaises(SingularDiffusionError) as caught:
            environmental_entropy(raising_lowering_sde())
        self.assertEqual(caught.exception.system, "raising-lowering")
        self.assertEqual(len(caught.exception.state), 3)
        self.assertEqual(caught.exception.det, 0)
        self.assertIn("raising-lowering", str(caught.exception))

    def test_reduced_frame(self):
        self.assertTrue(verify.check_reduced_entropy().passed)

    def test_reduced_fields_finite(self):
        system = raising_lowering_sde()
        reduced, rmap = reduce(system, [1], initial=[0.5, 0.5, 0.5])
        u, dt_term, det = environmental_entropy(reduced, rmap).fields(np.array([0.5, 0.5]))
        self.assertTrue(np.all(np.isfinite(u)))
        self.assertTrue(math.isfinite(float(dt_term)))
        self.assertAlmostEqual(float(det), 0.0625, places=12)

    def test_equilibrium_produces_nothing(self):
        x = sp.Symbol("x", real=True)
        system = SdeSystem("free", (x,), [0], diffusion=1)
        values, flagged = make_entropy_increment(system, "general")(np.array([[0.2], [-1.5]]), np.array([[0.1], [0.3]]),
                                                                    1e-3)
        np.testing.assert_array_equal(values, 0.0)
        self.assertFalse(np.any(flagged))

    def test_reduced_ensemble_mean_grows(self):
        system = raising_lowering_sde()
        reduced, rmap = reduce(system, [1], initial=[0.5, 0.5, 0.5])
        config = IntegratorConfig(dt=1e-3, steps=1000, seed=41, record_stride=50)
        result = run_ensemble(reduced, config, [0.5, 0.5], 100, entropy_spec=("general", rmap))
        mean = result.ds_env_mean
        self.assertTrue(np.all(np.isfinite(mean)))
        self.assertGreater(mean[-1], 0.0)
        self.assertTrue(is_nondecreasing_trend(mean, 5, tol=0.05 * abs(mean[-1])))
        self.assertLess(result.n_flagged, 0.05 * 100 * config.steps)

    def test_closed_form_needs_pure_model(self):
        with self.assertRaises(ConfigError):
            make_entropy_increment(pure_state_sde(0.5), "closed-form-z")
        with self.assertRaises(ConfigError):
            make_entropy_increment(theta_sde(), "closed-form-z")
        with self.assertRaises(ConfigError):
            make_entropy_increment(theta_sde(), "fluctuation")


class TestSingularNeighbourhood(unittest.TestCase):
    def setUp(self):
        reduced, self.rmap = reduce(raising_lowering_sde(), [1], initial=[0.5, 0.5, 0.5])
        self.entropy = environmental_entropy(reduced, self.rmap)

    def test_conditioning(self):
        self.assertAlmostEqual(float(self.entropy.conditioning(np.array([0.5, 0.5]))), 0.0625 / (1.125 / 2) ** 2,
                               places=12)
        self.assertEqual(float(environmental_entropy(theta_sde()).conditioning(np.array([1.0]))), 1.0)

    def test_interior_steps_kept(self):
        states = np.array([[0.5, 0.5], [0.02, 0.5]])
        dx = np.array([[1e-3, -1e-3], [-0.04, 0.0]])
        values, flagged = self.entropy.increment(states, dx, 1e-3)
        np.testing.assert_array_equal(flagged, [False, False])
        self.assertTrue(np.all(np.isfinite(values)))

    def test_unresolved_step_near_pure_states(self):
        values, flagged = self.entropy.increment(np.array([[0.7, 0.7]]), np.array([[0.005, 0.005]]), 1e-3)
        self.assertTrue(flagged[0])
        self.assertEqual(values[0], 0.0)

    def test_neighbourhood_shrinks_with_dt(self):
        states = np.array([[1e-5, 0.5]])
        dx = np.array([[1e-7, 0.0]])
        self.assertTrue(self.entropy.singular_neighbourhood(states, dx, 1e-3)[0])
        self.assertFalse(self.entropy.singular_neighbourhood(states, dx, 1e-9)[0])


class TestFrames(unittest.TestCase):
    def test_z_paths_in_theta_frame_agree(self):
        config = IntegratorConfig(dt=1e-3, steps=1000, seed=51)
        z = run_ensemble(pure_state_sde(0.0), config, [0.5], 200, traces=200)
        theta_paths = np.arccos(np.clip(z.traces, -1.0, 1.0))
        values, _ = closed_form_increment_theta(theta_paths[:, :-1], np.diff(theta_paths, axis=1), config.dt)
        theta = run_ensemble(theta_sde(), config.with_seed(52), [math.acos(0.5)], 200,
                             entropy_spec=("closed-form-theta", None))
        self.assertTrue(ks_two_sample(values.sum(axis=1), theta.final_ds_env).passed(KS_ALPHA))

    def test_stationary_rate_vanishes(self):
        block = 1000
        config = IntegratorConfig(dt=1e-2, steps=200 * block, seed=53, record_stride=block)
        system = theta_sde()
        trajectory = run_trajectory(system, config, [math.pi / 2],
                                    entropy=make_entropy_increment(system, "closed-form-theta"))
        rates = np.diff(trajectory.ds_env) / (block * config.dt)
        self.assertTrue(within_standard_errors(float(np.mean(rates)), 0.0, standard_error(rates)))


class TestAttach(unittest.TestCase):
    def setUp(self):
        self.system = theta_sde()
        self.config = IntegratorConfig(dt=1e-3, steps=400, seed=31)
        self.trajectory = run_trajectory(self.system, self.config, [1.0])

    def test_general_matches_closed_form(self):
        closed = attach_entropy(run_trajectory(self.system, self.config, [1.0]), "closed-form-theta").ds_env
        general = attach_entropy(self.trajectory, "general", system=self.system).ds_env
        self.assertEqual(closed[0], 0.0)
        np.testing.assert_allclose(general, closed, atol=1e-8)

    def test_in_loop_matches_post_hoc(self):
        increment = make_entropy_increment(self.system, "closed-form-theta")
        in_loop = run_trajectory(self.system, self.config, [1.0], entropy=increment).ds_env
        post_hoc = attach_entropy(self.trajectory, "closed-form-theta").ds_env
        np.testing.assert_allclose(in_loop, post_hoc, atol=1e-12)

    def test_wrong_coordinates(self):
        with self.assertRaises(ConfigError):
            attach_entropy(self.trajectory, "closed-form-z")

    def test_general_needs_system(self):
        with self.assertRaises(ConfigError):
            attach_entropy(self.trajectory, "general")

    def test_system_entropy_uniform_pdf(self):
        attach_entropy(self.trajectory, "closed-form-theta")
        pdf = Pdf1DGrid.uniform(uniform_edges(0.0, math.pi, 100))
        attach_system_entropy(self.trajectory, [pdf] * len(self.trajectory.times))
        np.testing.assert_allclose(self.trajectory.ds_sys, 0.0, atol=1e-12)
        np.testing.assert_allclose(self.trajectory.ds_tot, self.trajectory.ds_env, atol=1e-12)

    def test_system_entropy_from_density(self):
        edges = uniform_edges(0.0, math.pi, 400)
        pdf = Pdf1DGrid.from_function(edges, lambda t: 1.0 + np.cos(t) ** 2)
        attach_system_entropy(self.trajectory, [pdf] * len(self.trajectory.times))
        theta = self.trajectory.states[:, 0]
        expected = -math.log(pdf.density_at(theta[-1])) + math.log(pdf.density_at(theta[0]))
        self.assertAlmostEqual(self.trajectory.ds_sys[-1], expected, places=12)
        self.assertTrue(self.trajectory.ledger.check())

    def test_system_entropy_series_length(self):
        pdf = Pdf1DGrid.uniform(uniform_edges(0.0, math.pi, 10))
        with self.assertRaises(ConfigError):
            attach_system_entropy(self.trajectory, [pdf])


class TestLedger(unittest.TestCase):
    def test_balance(self):
        ledger = EntropyLedger([0.0, 0.1, 0.3], ds_sys=[0.0, -0.2, 0.5])
        np.testing.assert_allclose(ledger.ds_tot, [0.0, -0.1, 0.8])
        self.assertTrue(ledger.check())

    def test_out_of_balance(self):
        ledger = EntropyLedger([0.0, 0.1], ds_sys=[0.0, 0.1])
        ledger.ds_tot = np.array([0.0, 0.5])
        with self.assertRaises(NumericalError):
            ledger.check()


if __name__ == '__main__':
    unittest.main()
