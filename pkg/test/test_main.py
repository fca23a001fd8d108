import os
import shutil
import tempfile
import unittest
from unittest import mock

import numpy as np

from qsdentropy import main as qsd_main
from qsdentropy.config import RunConfig, load_config_file, parse_point
from qsdentropy.defaults import EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY, SEED
from qsdentropy.errors import ConfigError, UnphysicalStateError
from qsdentropy.output import read_table
from qsdentropy.verify import CheckResult


class TestParser(unittest.TestCase):
    def test_defaults(self):
        args = qsd_main.parse_arguments(["simulate"])
        config = RunConfig.from_args(args)
        self.assertEqual(config.model, "raising-lowering")
        self.assertEqual(config.frame, "xyz")
        self.assertEqual(config.init, (0.5, 0.5, 0.5))
        self.assertEqual(config.seed, SEED)
        self.assertEqual(config.entropy, "none")

    def test_command_defaults(self):
        self.assertEqual(qsd_main.parse_arguments(["histogram"]).model, "pure-z")
        self.assertEqual(qsd_main.parse_arguments(["fpe"]).model, "pure-theta")

    def test_config_file(self):
        tmpdir = tempfile.mkdtemp()
        try:
            path = os.path.join(tmpdir, "run.cfg")
            with open(path, "w") as handle:
                handle.write("# xz run\nframe = xz\ninit = 0.3,0.4\nsteps=50\ndt = 2e-3\n")
            args = qsd_main.parse_arguments(["simulate", "--config", path, "--steps", "70"])
            self.assertEqual(args.frame, "xz")
            self.assertEqual(args.init, (0.3, 0.4))
            self.assertEqual(args.dt, 2e-3)
            self.assertEqual(args.steps, 70)
        finally:
            shutil.rmtree(tmpdir)

    def test_config_file_unknown_key(self):
        tmpdir = tempfile.mkdtemp()
        try:
            path = os.path.join(tmpdir, "run.cfg")
            with open(path, "w") as handle:
                handle.write("ntraj = 5\n")
            with self.assertRaises(ConfigError):
                qsd_main.parse_arguments(["simulate", "--config", path])
            self.assertEqual(load_config_file(path), {"ntraj": "5"})
        finally:
            shutil.rmtree(tmpdir)


class TestRunConfig(unittest.TestCase):
    def test_gamma_from_model(self):
        self.assertEqual(RunConfig("simulate", model="pure-z:0.5").gamma, 0.5)

    def test_rejections(self):
        with self.assertRaises(ConfigError):
            RunConfig("simulate", model="harmonic")
        with self.assertRaises(ConfigError):
            RunConfig("simulate", frame="theta")
        with self.assertRaises(ConfigError):
            RunConfig("simulate", dt=-1.0)
        with self.assertRaises(ConfigError):
            RunConfig("simulate", entropy="general")
        with self.assertRaises(ConfigError):
            RunConfig("simulate", model="pure-theta", entropy="closed-form-z")
        with self.assertRaises(ConfigError):
            RunConfig("simulate", system_entropy=True)
        with self.assertRaises(UnphysicalStateError):
            RunConfig("simulate", init=(0.9, 0.9, 0.0))

    def test_gamma_defaults_to_general_entropy(self):
        self.assertEqual(RunConfig("simulate", model="pure-z:0.5").entropy, "general")
        self.assertEqual(RunConfig("simulate", model="pure-z").entropy, "closed-form-z")
        self.assertEqual(RunConfig("simulate", model="pure-z:0.5", entropy="none").entropy, "none")

    def test_projection_needs_xyz_frame(self):
        with self.assertRaises(ConfigError):
            RunConfig("simulate", frame="xz", init=(0.5, 0.5), project_invariants=True)
        with self.assertRaises(ConfigError):
            RunConfig("simulate", model="pure-z", project_invariants=True)
        config = RunConfig("simulate", project_invariants=True)
        system, _, _ = config.build()
        self.assertAlmostEqual(config.invariant_map(system).levels[0], 2.0)
        self.assertIsNone(RunConfig("simulate").invariant_map(system))

    def test_xz_recovers_y(self):
        config = RunConfig("simulate", frame="xz", init=(0.5, 0.5))
        self.assertAlmostEqual(config.full_initial()[1], 0.5)
        system, rmap, initial = config.build()
        self.assertEqual(system.labels, ("x", "z"))
        self.assertAlmostEqual(rmap.levels[0], 2.0)

    def test_parse_point(self):
        self.assertEqual(parse_point("0.5, 0.5 0.5"), (0.5, 0.5, 0.5))
        with self.assertRaises(ConfigError):
            parse_point("a,b")


class TestCommands(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def path(self, name):
        return os.path.join(self.tmpdir, name)

    def test_simulate(self):
        out = self.path("traj.csv")
        self.assertEqual(qsd_main.main(["simulate", "--steps", "100", "--out", out]), EXIT_OK)
        meta, names, data = read_table(out)
        self.assertEqual(meta["kind"], "trajectory")
        self.assertEqual(meta["seed"], str(SEED))
        self.assertEqual(names[:4], ["t", "x", "y", "z"])
        self.assertEqual(data.shape[0], 101)

    def test_simulate_is_reproducible(self):
        outs = [self.path("a.csv"), self.path("b.csv")]
        for out in outs:
            qsd_main.main(["simulate", "--model", "pure-theta", "--steps", "200", "--seed", "3", "--out", out])
        np.testing.assert_array_equal(read_table(outs[0])[2], read_table(outs[1])[2])

    def test_simulate_system_entropy(self):
        out = self.path("traj.csv")
        argv = ["simulate", "--model", "pure-theta", "--steps", "50", "--system-entropy", "--cells", "100",
                "--out", out]
        self.assertEqual(qsd_main.main(argv), EXIT_OK)
        _, names, data = read_table(out)
        self.assertEqual(names, ["t", "theta", "ds_env", "ds_sys", "ds_tot"])
        np.testing.assert_allclose(data[:, 4], data[:, 2] + data[:, 3], atol=1e-12)

    def test_ensemble_z_reference(self):
        out = self.path("ens.csv")
        argv = ["ensemble", "--model", "pure-z", "--steps", "100", "--stride", "10", "--ntraj", "20", "--traces", "2",
                "--out", out]
        self.assertEqual(qsd_main.main(argv), EXIT_OK)
        _, names, data = read_table(out)
        self.assertIn("mean_z_exact", names)
        self.assertIn("mean_ds_env", names)
        self.assertIn("ds_env_1", names)
        self.assertEqual(data.shape[0], 11)

    def test_simulate_projected(self):
        out = self.path("traj.csv")
        argv = ["simulate", "--steps", "300", "--project-invariants", "--out", out]
        self.assertEqual(qsd_main.main(argv), EXIT_OK)
        _, names, data = read_table(out)
        x, y, z = data[:, 1], data[:, 2], data[:, 3]
        np.testing.assert_allclose((1.0 - x * x - z * z) / (y * y), 2.0, rtol=1e-9)

    def test_ensemble_gamma_default_entropy(self):
        out = self.path("ens.csv")
        argv = ["ensemble", "--model", "pure-z:0.5", "--steps", "100", "--ntraj", "10", "--out", out]
        self.assertEqual(qsd_main.main(argv), EXIT_OK)
        meta, names, _ = read_table(out)
        self.assertEqual(meta["entropy"], "general")
        self.assertIn("mean_ds_env", names)

    def test_histogram(self):
        out = self.path("hist.csv")
        argv = ["histogram", "--model", "pure-theta", "--steps", "20000", "--bin-width", "0.1",
                "--chi2-bin-width", "0.5", "--thin", "10", "--out", out]
        self.assertEqual(qsd_main.main(argv), EXIT_OK)
        meta, names, data = read_table(out)
        self.assertEqual(names, ["bin_left", "bin_right", "count", "density", "analytic"])
        self.assertEqual(int(data[:, 2].sum()), 20001)
        self.assertIn("p_value", meta)

    def test_histogram_from_samples(self):
        traj = self.path("traj.csv")
        qsd_main.main(["simulate", "--model", "pure-z", "--steps", "5000", "--out", traj])
        out = self.path("hist.csv")
        argv = ["histogram", "--samples", traj, "--chi2-bin-width", "0.5", "--thin", "1", "--out", out]
        self.assertEqual(qsd_main.main(argv), EXIT_OK)
        self.assertEqual(read_table(out)[0]["samples"], "5001")

    def test_stationary(self):
        out = self.path("pst.csv")
        fpe_out = self.path("fpe.csv")
        argv = ["stationary", "--model", "pure-theta", "--points", "200", "--fpe-out", fpe_out, "--out", out]
        self.assertEqual(qsd_main.main(argv), EXIT_OK)
        _, names, data = read_table(out)
        self.assertEqual(names, ["theta", "density"])
        widths = np.diff(data[:, 0])
        self.assertAlmostEqual(float(np.sum(data[:, 1]) * widths[0]), 1.0, places=3)
        _, _, fpe_data = read_table(fpe_out)
        np.testing.assert_allclose(fpe_data[:, 2], data[:, 1], rtol=2e-3)

    def test_fpe(self):
        out = self.path("fpe.csv")
        records = self.path("records.csv")
        argv = ["fpe", "--cells", "100", "--fpe-dt", "1e-2", "--t-end", "0.5", "--snapshots", "5",
                "--records-out", records, "--out", out]
        self.assertEqual(qsd_main.main(argv), EXIT_OK)
        _, names, data = read_table(out)
        self.assertEqual(names[:3], ["theta", "width", "p_t=0"])
        self.assertEqual(len(names), 8)
        for column in range(2, data.shape[1]):
            self.assertAlmostEqual(float(np.sum(data[:, column] * data[:, 1])), 1.0, places=9)
        _, record_names, _ = read_table(records)
        self.assertEqual(record_names[0], "t")

    def test_verify_subset(self):
        argv = ["verify", "--checks", "boundary-terms", "purity-sde"]
        self.assertEqual(qsd_main.main(argv), EXIT_OK)

    def test_verify_checks_from_config_file(self):
        path = self.path("verify.cfg")
        with open(path, "w") as handle:
            handle.write("checks = boundary-terms, purity-sde\n")
        passed = [CheckResult("boundary-terms", True, 0.0, 1e-8)]
        with mock.patch.object(qsd_main, "run_checks", return_value=passed) as run_checks:
            self.assertEqual(qsd_main.main(["verify", "--config", path]), EXIT_OK)
        run_checks.assert_called_once_with(["boundary-terms", "purity-sde"])
        with open(path, "w") as handle:
            handle.write("checks = boundary-terms no-such-check\n")
        self.assertEqual(qsd_main.main(["verify", "--config", path]), EXIT_CONFIG)

    def test_exit_config(self):
        self.assertEqual(qsd_main.main(["simulate", "--dt", "-1", "--out", self.path("x.csv")]), EXIT_CONFIG)
        self.assertEqual(qsd_main.main(["simulate", "--init", "2,0,0", "--out", self.path("x.csv")]), EXIT_CONFIG)
        self.assertEqual(qsd_main.main(["stationary", "--model", "raising-lowering"]), EXIT_CONFIG)

    def test_exit_numerical(self):
        argv = ["fpe", "--scheme", "explicit", "--fpe-dt", "1", "--out", self.path("x.csv")]
        self.assertEqual(qsd_main.main(argv), EXIT_NUMERICAL)

    def test_exit_verify(self):
        failed = [CheckResult("boundary-terms", False, 1.0, 1e-8)]
        with mock.patch.object(qsd_main, "run_checks", return_value=failed):
            self.assertEqual(qsd_main.main(["verify"]), EXIT_VERIFY)


if __name__ == '__main__':
    unittest.main()
