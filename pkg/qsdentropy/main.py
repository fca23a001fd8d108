import argparse
import logging
import sys

import numpy as np

from ._version import __version__
from .analysis import histogram_edges, histogram, histogram_chi_square
from .config import RunConfig, load_config_file, parse_point
from .defaults import *
from .entropy import make_entropy_increment, attach_system_entropy
from .errors import ConfigError, NumericalError
from .fokker_planck import (Pdf1DGrid, FokkerPlanckOperator, default_edges, fpe_series, fpe_stationary_1d,
                            ds_sys_mean)
from .integrator import IntegratorConfig, run_trajectory, run_ensemble
from .lindblad import purity_expr
from .output import (CsvMeta, write_trajectory, write_ensemble, write_histogram, write_stationary, write_fpe,
                     write_entropy_records, write_report, read_table)
from .stationary import stationary_pdf_z, stationary_pdf_theta, stationary_pdf_multiplicative, stationary_boundary_term
from .verify import run_checks, CHECKS

logger = logging.getLogger(__name__)

STATIONARY_PDFS = {"z": stationary_pdf_z, "theta": stationary_pdf_theta, "x": stationary_pdf_multiplicative}


def log_run_header(config):
    logger.info("Running QSDEntropy %s" % __version__)
    logger.info("Command-line %s" % (" ".join(sys.argv)))
    logger.info("Arguments are " + str(config))


def integrator_config(config):
    return IntegratorConfig(config.dt, config.steps, config.seed, config.stride)


def meta_for(config, kind, **extra):
    if config.gamma:
        extra["gamma"] = config.gamma
    return CsvMeta(kind, model=config.model, frame=config.frame, seed=config.seed, dt=config.dt, **extra)


def stationary_pdf_for(config):
    if config.frame not in STATIONARY_PDFS:
        raise ConfigError("No analytic stationary pdf for the %s frame" % config.frame)
    if config.gamma:
        raise ConfigError("The analytic stationary pdfs are for gamma = 0, got %g" % config.gamma)
    return STATIONARY_PDFS[config.frame]()


def system_entropy_series(system, config, initial, n_samples):
    """FPE-solved pdfs at every recorded sample, started from a narrow bump at the initial point."""
    edges = default_edges(system, config.option("cells", FPE_CELLS))
    start = Pdf1DGrid.bump(edges, float(initial[0]), config.option("bump_width", FPE_BUMP_WIDTH))
    return fpe_series(system, start, config.dt * config.stride, n_samples - 1)


def run_simulate(config):
    log_run_header(config)
    system, rmap, initial = config.build()
    icfg = integrator_config(config)
    entropy = None
    if config.entropy != "none":
        entropy = make_entropy_increment(system, config.entropy, rmap)
        logger.info("Accumulating environmental entropy with the %s method" % config.entropy)

    trajectory = run_trajectory(system, icfg, initial, entropy=entropy, invariant_map=config.invariant_map(system))
    logger.info("Integrated %s" % str(trajectory))
    if config.system_entropy:
        logger.info("Solving the Fokker-Planck equation for the system entropy")
        if trajectory.ds_env is None:
            trajectory.ds_env = np.zeros(len(trajectory))
        attach_system_entropy(trajectory, system_entropy_series(system, config, initial, len(trajectory)))

    write_trajectory(config.out, trajectory, meta_for(config, "trajectory", entropy=config.entropy,
                                                      flagged=trajectory.flagged))
    logger.info("All Done!")
    return EXIT_OK


def mean_z_reference(z0, gamma, times):
    """<z(t)> = -gamma/2 + (z0 + gamma/2) exp(-2t) of the pure-state dynamics."""
    return -0.5 * gamma + (z0 + 0.5 * gamma) * np.exp(-2.0 * times)


def run_ensemble_command(config):
    log_run_header(config)
    system, rmap, initial = config.build()
    observables = [("purity", purity_expr())] if config.frame == "xyz" else []
    entropy_spec = (config.entropy, rmap) if config.entropy != "none" else None
    if entropy_spec is not None:
        # fail on a bad method here rather than inside every worker
        make_entropy_increment(system, config.entropy, rmap)

    result = run_ensemble(system, integrator_config(config), initial, config.ntraj, worker_count=config.workers,
                          entropy_spec=entropy_spec, observables=observables, traces=config.traces,
                          invariant_map=config.invariant_map(system))
    logger.info("Ensemble finished: %s" % str(result))
    if result.n_failed == config.ntraj:
        logger.error("Every trajectory failed")
        return EXIT_NUMERICAL

    reference = None
    if config.frame == "z":
        gamma = system.parameters.get("gamma", config.gamma)
        reference = ("mean_z_exact", mean_z_reference(config.init[0], gamma, result.times))
    write_ensemble(config.out, result, meta_for(config, "ensemble", ntraj=config.ntraj, failed=result.n_failed,
                                                flagged=result.n_flagged, entropy=config.entropy),
                   reference=reference)
    logger.info("All Done!")
    return EXIT_OK


def histogram_samples(config):
    """Samples of the frame's coordinate, either read from a trajectory file or simulated here."""
    samples_path = config.option("samples")
    if samples_path:
        meta, names, data = read_table(samples_path)
        column = config.option("column") or ("z" if "z" in names else config.frame)
        if column not in names:
            raise ConfigError("Column %s not in %s (has %s)" % (column, samples_path, ", ".join(names)))
        values = data[:, names.index(column)]
        if config.frame == "theta" and column == "z":
            values = np.arccos(np.clip(values, -1.0, 1.0))
        logger.info("Read %d samples of %s from %s (%s)" % (len(values), column, samples_path, meta.get("kind")))
        return values
    system, _, initial = config.build()
    trajectory = run_trajectory(system, integrator_config(config), initial)
    return trajectory.states[:, 0]


def run_histogram(config):
    log_run_header(config)
    if config.frame not in ("z", "theta"):
        raise ConfigError("Histograms are compared against the z or theta stationary pdf, not the %s frame" %
                          config.frame)
    pdf = stationary_pdf_for(config)
    samples = histogram_samples(config)
    edges = histogram_edges(pdf.lower, pdf.upper, config.option("bin_width", HIST_BIN_WIDTH))
    counts, density = histogram(samples, edges)
    analytic = pdf.density(0.5 * (edges[1:] + edges[:-1]))
    fit = histogram_chi_square(samples, pdf, bin_width=config.option("chi2_bin_width", HIST_BIN_WIDTH),
                               exclude_fraction=config.option("exclude_fraction", HIST_EXCLUDE_FRACTION),
                               thin=config.option("thin", HIST_THIN))
    if not fit.passed(CHI2_ALPHA):
        logger.warning("Histogram differs from the stationary pdf at alpha=%g: %s" % (CHI2_ALPHA, str(fit)))
    write_histogram(config.out, edges, counts, density, analytic,
                    meta_for(config, "histogram", samples=len(samples), chi2=fit.statistic, p_value=fit.p_value,
                             dof=fit.dof))
    logger.info("All Done!")
    return EXIT_OK


def run_stationary(config):
    log_run_header(config)
    pdf = stationary_pdf_for(config)
    system, _, _ = config.build()
    points = config.option("points", STATIONARY_POINTS)
    edges = default_edges(system, points)
    centers = 0.5 * (edges[1:] + edges[:-1])
    grid = fpe_stationary_1d(system, edges)
    boundary = stationary_boundary_term(system, pdf)
    logger.info("Stationary [D p] of %s: %.12g" % (pdf.label, boundary))
    write_stationary(config.out, config.labels[0], centers, pdf.density(centers),
                     meta_for(config, "stationary", normalization=pdf.normalization, boundary_dp=boundary))
    fpe_out = config.option("fpe_out")
    if fpe_out:
        write_fpe(fpe_out, config.labels[0], [grid], meta_for(config, "fpe-stationary"))
    logger.info("All Done!")
    return EXIT_OK


def run_fpe(config):
    log_run_header(config)
    if not config.is_one_dimensional:
        raise ConfigError("The Fokker-Planck solver handles one-dimensional frames, not %s" % config.frame)
    system, _, initial = config.build()
    edges = default_edges(system, config.option("cells", FPE_CELLS))
    start = config.option("start", "bump")
    if start == "stationary":
        pdf = stationary_pdf_for(config)
        initial_pdf = Pdf1DGrid.from_function(edges, pdf.density)
    elif start == "bump":
        initial_pdf = Pdf1DGrid.bump(edges, float(initial[0]), config.option("bump_width", FPE_BUMP_WIDTH))
    else:
        raise ConfigError("Unknown initial pdf %s; use bump or stationary" % start)

    fpe_dt = config.option("fpe_dt", FPE_DT)
    t_end = config.option("t_end", FPE_T_END)
    n_steps = int(round(t_end / fpe_dt))
    snapshots = max(1, config.option("snapshots", FPE_SNAPSHOTS))
    operator = FokkerPlanckOperator(system, edges)
    final, series = operator.evolve(initial_pdf, fpe_dt, t_end, scheme=config.option("scheme", "implicit"),
                                    record_every=max(1, n_steps // snapshots))
    if series[-1].time != final.time:
        series.append(final)
    logger.info("Mass after t=%g: %.15g" % (final.time, final.mass()))
    write_fpe(config.out, config.labels[0], series, meta_for(config, "fpe", fpe_dt=fpe_dt, cells=len(edges) - 1))
    records_out = config.option("records_out")
    if records_out:
        write_entropy_records(records_out, ds_sys_mean(series, system), meta_for(config, "fpe-entropy"))
    logger.info("All Done!")
    return EXIT_OK


def selected_checks(config):
    """Check names from the command line, or from a space- or comma-separated config file value."""
    checks = config.option("checks")
    if checks is None:
        return None
    if isinstance(checks, str):
        checks = checks.replace(",", " ").split()
    unknown = sorted(set(checks) - set(name for name, _ in CHECKS))
    if unknown:
        raise ConfigError("Unknown checks %s; choose from %s" % (", ".join(unknown),
                                                                ", ".join(name for name, _ in CHECKS)))
    return list(checks)


def run_verify(config):
    log_run_header(config)
    results = run_checks(selected_checks(config))
    write_report(sys.stdout, results)
    logger.info("All Done!")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def add_model_options(subparser, default_model="raising-lowering"):
    model_parser = subparser.add_argument_group("Model options")
    model_parser.add_argument("--model", default=default_model,
                              help="Model: raising-lowering, weighted:GAMMA, pure-z:GAMMA, pure-theta, multiplicative")
    model_parser.add_argument("--frame", choices=FRAMES, default=None,
                              help="Coordinate frame (default depends on the model)")
    model_parser.add_argument("--gamma", type=float, default=GAMMA, help="Operator weighting for weighted and pure-z")
    model_parser.add_argument("--init", type=parse_point, default=None,
                              help="Initial point as comma-separated coordinates of the frame")
    model_parser.add_argument("--level", type=float, default=None,
                              help="Level of the constant of motion used to recover y in the xz frame")


def add_integration_options(subparser):
    integration_parser = subparser.add_argument_group("Integration options")
    integration_parser.add_argument("--dt", type=float, default=DT, help="Time step")
    integration_parser.add_argument("--steps", type=int, default=STEPS, help="Number of time steps")
    integration_parser.add_argument("--seed", type=int, default=SEED, help="Master random seed")
    integration_parser.add_argument("--stride", type=int, default=RECORD_STRIDE, help="Record every stride steps")
    integration_parser.add_argument("--project-invariants", dest="project_invariants", action="store_true",
                                    help="Put every xyz step back on the level set of the constant of motion")


def add_entropy_options(subparser):
    entropy_parser = subparser.add_argument_group("Entropy options")
    entropy_parser.add_argument("--entropy", choices=ENTROPY_METHODS, default=None,
                                help="Environmental entropy method (default depends on the frame)")
    entropy_parser.add_argument("--system-entropy", dest="system_entropy", action="store_true",
                                help="Add the system entropy from the Fokker-Planck pdf (1-D frames)")
    entropy_parser.add_argument("--cells", type=int, default=FPE_CELLS, help="Fokker-Planck grid cells")


def add_output_options(subparser):
    out_parser = subparser.add_argument_group("Output options")
    out_parser.add_argument("--out", default="-", help="Output CSV file, - for stdout")


def add_common_options(subparser):
    other_parser = subparser.add_argument_group("Other options")
    other_parser.add_argument("--config", default=None, help="File of key=value defaults; flags override it")
    other_parser.add_argument("--verbose", action="store_true", help="Debug logging")


def build_parser():
    parser = argparse.ArgumentParser(description="Quantum state diffusion and stochastic entropy production",
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    commands = {}

    def add_command(name, func, help_text):
        subparser = subparsers.add_parser(name, help=help_text, description=help_text,
                                          formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        subparser.set_defaults(func=func)
        commands[name] = subparser
        return subparser

    simulate_parser = add_command("simulate", run_simulate, "Integrate one trajectory")
    add_model_options(simulate_parser)
    add_integration_options(simulate_parser)
    add_entropy_options(simulate_parser)
    add_output_options(simulate_parser)
    add_common_options(simulate_parser)

    ensemble_parser = add_command("ensemble", run_ensemble_command, "Integrate an ensemble of trajectories")
    add_model_options(ensemble_parser)
    add_integration_options(ensemble_parser)
    add_entropy_options(ensemble_parser)
    ensemble_group = ensemble_parser.add_argument_group("Ensemble options")
    ensemble_group.add_argument("--ntraj", type=int, default=NTRAJ, help="Number of trajectories")
    ensemble_group.add_argument("--workers", type=int, default=WORKERS, help="Number of worker processes")
    ensemble_group.add_argument("--traces", type=int, default=TRACES, help="Per-trajectory columns to write")
    add_output_options(ensemble_parser)
    add_common_options(ensemble_parser)

    histogram_parser = add_command("histogram", run_histogram, "Histogram a long trajectory against the stationary pdf")
    add_model_options(histogram_parser, default_model="pure-z")
    add_integration_options(histogram_parser)
    histogram_group = histogram_parser.add_argument_group("Histogram options")
    histogram_group.add_argument("--bin-width", dest="bin_width", type=float, default=HIST_BIN_WIDTH,
                                 help="Width of the written histogram bins")
    histogram_group.add_argument("--chi2-bin-width", dest="chi2_bin_width", type=float, default=HIST_BIN_WIDTH,
                                 help="Width of the bins of the chi-square test")
    histogram_group.add_argument("--exclude-fraction", dest="exclude_fraction", type=float,
                                 default=HIST_EXCLUDE_FRACTION, help="Fraction of the domain left out at each end")
    histogram_group.add_argument("--thin", type=int, default=HIST_THIN, help="Use every thin-th sample in the test")
    histogram_group.add_argument("--samples", default=None, help="Trajectory CSV to read samples from")
    histogram_group.add_argument("--column", default=None, help="Column of --samples (z by default)")
    add_output_options(histogram_parser)
    add_common_options(histogram_parser)

    stationary_parser = add_command("stationary", run_stationary, "Write the analytic stationary pdf")
    add_model_options(stationary_parser, default_model="pure-z")
    stationary_group = stationary_parser.add_argument_group("Stationary options")
    stationary_group.add_argument("--points", type=int, default=STATIONARY_POINTS, help="Number of grid cells")
    stationary_group.add_argument("--fpe-out", dest="fpe_out", default=None,
                                  help="Also write the discrete Fokker-Planck stationary state here")
    add_output_options(stationary_parser)
    add_common_options(stationary_parser)

    fpe_parser = add_command("fpe", run_fpe, "Evolve a pdf with the one-dimensional Fokker-Planck equation")
    add_model_options(fpe_parser, default_model="pure-theta")
    fpe_group = fpe_parser.add_argument_group("Fokker-Planck options")
    fpe_group.add_argument("--cells", type=int, default=FPE_CELLS, help="Grid cells")
    fpe_group.add_argument("--fpe-dt", dest="fpe_dt", type=float, default=FPE_DT, help="Time step")
    fpe_group.add_argument("--t-end", dest="t_end", type=float, default=FPE_T_END, help="Final time")
    fpe_group.add_argument("--snapshots", type=int, default=FPE_SNAPSHOTS, help="Number of recorded snapshots")
    fpe_group.add_argument("--start", choices=["bump", "stationary"], default="bump", help="Initial pdf")
    fpe_group.add_argument("--bump-width", dest="bump_width", type=float, default=FPE_BUMP_WIDTH,
                           help="Width of the initial bump centered at --init")
    fpe_group.add_argument("--scheme", choices=["implicit", "explicit"], default="implicit", help="Time stepping")
    fpe_group.add_argument("--records-out", dest="records_out", default=None,
                           help="Write Gibbs entropy and boundary terms of every snapshot here")
    add_output_options(fpe_parser)
    add_common_options(fpe_parser)

    verify_parser = add_command("verify", run_verify, "Run the invariant checks")
    verify_parser.add_argument("--checks", nargs="+", choices=[name for name, _ in CHECKS], default=None,
                               help="Checks to run (all by default)")
    add_common_options(verify_parser)
    return parser, commands


def parse_arguments(argv=None):
    """Parse argv; a --config file supplies defaults for the chosen command and explicit flags win."""
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        subparser = commands[args.command]
        known = set(action.dest for action in subparser._actions)
        values = load_config_file(args.config)
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError("Unknown settings in %s: %s" % (args.config, ", ".join(unknown)))
        subparser.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    try:
        args = parse_arguments(argv)
    except ConfigError as e:
        logging.basicConfig(level=logging.INFO, format=FORMAT)
        logger.error(str(e))
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=FORMAT)

    try:
        config = RunConfig.from_args(args)
        return args.func(config)
    except ConfigError as e:
        logger.error("Invalid configuration: %s" % str(e))
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error("Numerical failure: %s" % str(e))
        return EXIT_NUMERICAL
