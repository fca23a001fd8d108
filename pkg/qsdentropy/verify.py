import logging
import math
import traceback

import numpy as np

from .bloch import bloch_to_rho, constant_of_motion, PAULI
from .defaults import DT, SEED, VERIFY_FD_STEP, MULTIPLICATIVE_DOMAIN, MULTIPLICATIVE_DP_LIMIT
from .entropy import (make_entropy_increment, closed_form_increment_z, closed_form_increment_theta,
                      z_entropy_coefficients, theta_entropy_coefficients, environmental_entropy)
from .fokker_planck import (fpe_stationary_1d, geometric_edges, uniform_edges, boundary_term_mean,
                            boundary_gradient_term, ds_sys_mean)
from .integrator import (make_generator, draw_increments, coarsen_increments, integrate_with_increments,
                         run_trajectory, IntegratorConfig)
from .lindblad import (raising_lowering_sde, pure_state_sde, theta_sde, multiplicative_sde, build_bloch_sde,
                       drift_increment, noise_increment, constant_of_motion_expr, purity_drift_and_noise,
                       purity_closed_forms, LindbladOperator, C_MINUS, C_PLUS, X, Y, Z)
from .reduction import diffusion_matrix, null_eigenvectors, reduce, verify_constant
from .sde_system import compile_expr, central_derivative, central_second_derivative, central_gradient
from .stationary import (stationary_pdf_z, stationary_pdf_theta, stationary_pdf_multiplicative,
                         stationary_boundary_term, stationary_drift_balance)

logger = logging.getLogger(__name__)

RANDOM_POINTS = 1000
ITO_POINTS = 20
ITO_FD_STEP = 1e-4
ORACLE_CELLS = 4000
REFINEMENT_CELLS = (100, 400, 1600)
CANONICAL_POINT = (0.5, 0.5, 0.5)
REFINEMENT_PATHS = 100
REFINEMENT_DT = 2.5e-4
REFINEMENT_STEPS = 2000
# fine/coarse RMS drift of f under common noise; half order gives 0.71, first order 0.5
REFINEMENT_RATIO_RANGE = (0.4, 0.9)
WEAK_PATHS = 100000
WEAK_T = 0.5
WEAK_DTS = (0.05, 0.025, 0.0125)
WEAK_RATIO_RANGE = (0.25, 0.8)


class CheckResult:
    def __init__(self, name, passed, residual, tolerance, message=""):
        self.name = name
        self.passed = bool(passed)
        self.residual = residual
        self.tolerance = tolerance
        self.message = message

    def __str__(self):
        return "%-28s %s residual=%-12.4g tolerance=%-10.3g %s" % (self.name, "PASS" if self.passed else "FAIL",
                                                                   self.residual, self.tolerance, self.message)

    def __repr__(self):
        return "<%s(%s, passed=%s)>" % (self.__class__.__name__, self.name, self.passed)


def _within(name, residual, tolerance, message=""):
    residual = float(residual)
    return CheckResult(name, math.isfinite(residual) and residual <= tolerance, residual, tolerance, message)


def random_bloch_points(n, seed=SEED, margin=0.05):
    """Interior Bloch points with |r| < 1 - margin and |y|, |z| > margin."""
    rng = make_generator(seed)
    points = []
    while len(points) < n:
        r = rng.uniform(-1.0, 1.0, size=3)
        if np.sum(r * r) < (1.0 - margin) ** 2 and abs(r[1]) > margin and abs(r[2]) > margin:
            points.append(r)
    return np.array(points)


def analytic_null_vector(r):
    x, y, z = r
    return np.array([x / z, (1.0 - x * x - z * z) / (y * z), 1.0])


def reduced_diffusion_closed_form(x, z):
    return np.array([[(1.0 - x * x) ** 2 + z * z, -x * z * (2.0 - x * x)],
                     [-x * z * (2.0 - x * x), x * x * (1.0 + z * z)]])


def check_constant_of_motion():
    system = raising_lowering_sde()
    drift, noise = verify_constant(system, constant_of_motion_expr(), CANONICAL_POINT)
    exact = max(abs(drift), np.max(np.abs(noise)))
    drift, noise = verify_constant(system, constant_of_motion, CANONICAL_POINT, VERIFY_FD_STEP)
    numeric = max(abs(drift), np.max(np.abs(noise)))
    # second differences at h = 1e-5 carry roundoff near 1e-5
    return CheckResult("constant-of-motion", exact <= 1e-10 and numeric <= 1e-4, exact, 1e-10,
                       "finite differences %.3g f=%g" % (numeric, constant_of_motion(CANONICAL_POINT)))


def check_null_eigenvector():
    system = raising_lowering_sde()
    null = null_eigenvectors(diffusion_matrix(system, CANONICAL_POINT))
    if len(null) != 1:
        return CheckResult("null-eigenvector", False, float(len(null)), 1.0, "expected one null direction")
    expected = np.array([1.0, 2.0, 1.0]) / math.sqrt(6.0)
    span_residual = np.linalg.norm(expected - null[0].dot(expected) * null[0])
    worst = 0.0
    for r in random_bloch_points(RANDOM_POINTS):
        alpha = analytic_null_vector(r)
        worst = max(worst, np.max(np.abs(diffusion_matrix(system, r).dot(alpha))))
    return _within("null-eigenvector", max(span_residual, worst), 1e-8)


def check_reduced_diffusion():
    system = raising_lowering_sde()
    reduced, _ = reduce(system, [1], initial=CANONICAL_POINT)
    D = reduced.diffusion(np.array([0.5, 0.5]))
    det_residual = abs(np.linalg.det(D) - 0.0625)
    worst = 0.0
    rng = make_generator(SEED + 1)
    for _ in range(100):
        x, z = rng.uniform(-0.6, 0.6, size=2)
        worst = max(worst, np.max(np.abs(reduced.diffusion(np.array([x, z])) - reduced_diffusion_closed_form(x, z))))
    return _within("reduced-diffusion", max(det_residual, worst), 1e-10, "det=%.15g" % np.linalg.det(D))


def _project_numeric(matrix):
    return np.array([np.trace(matrix.dot(sigma)).real for sigma in PAULI])


def check_lindblad_closed_forms():
    ops = [LindbladOperator(C_MINUS), LindbladOperator(C_PLUS)]
    system = build_bloch_sde(ops)
    worst = 0.0
    trace_worst = 0.0
    for r in random_bloch_points(RANDOM_POINTS, seed=SEED + 2):
        rho = bloch_to_rho(r)
        drift = sum(drift_increment(rho, c) for c in ops)
        noise = [noise_increment(rho, c) for c in ops]
        trace_worst = max(trace_worst, abs(np.trace(drift)), max(abs(np.trace(n)) for n in noise))
        A = _project_numeric(drift)
        B = np.stack([_project_numeric(n) for n in noise], axis=-1)
        worst = max(worst, np.max(np.abs(system.drift(r) - A)), np.max(np.abs(system.noise(r) - B)))
    return _within("lindblad-closed-forms", max(worst, trace_worst), 1e-10)


def check_purity_sde():
    system = raising_lowering_sde()
    drift, noise = purity_drift_and_noise(system)
    drift_closed, noise_closed = purity_closed_forms()
    points = random_bloch_points(100, seed=SEED + 3)
    worst = np.max(np.abs(compile_expr(drift - drift_closed, (X, Y, Z))(points)))
    for column in noise:
        worst = max(worst, np.max(np.abs(compile_expr(column - noise_closed, (X, Y, Z))(points))))
    return _within("purity-sde", worst, 1e-12)


def check_ito_theta_transform():
    """Ito's lemma on theta = arccos z under the pure-z system, with finite-difference derivatives."""
    z_system = pure_state_sde(0.0)
    theta_system = theta_sde()
    worst = 0.0
    for z in np.linspace(-0.8, 0.8, ITO_POINTS):
        A = float(z_system.drift(np.array([z]))[0])
        D = float(z_system.diffusion(np.array([z]))[0, 0])
        g1 = central_derivative(math.acos, z, ITO_FD_STEP)
        g2 = central_second_derivative(math.acos, z, ITO_FD_STEP)
        theta = np.array([math.acos(z)])
        worst = max(worst, abs(g1 * A + g2 * D - theta_system.drift(theta)[0]),
                    abs(g1 * g1 * D - theta_system.diffusion(theta)[0, 0]))
    return _within("ito-theta-transform", worst, 1e-6)


def check_entropy_consistency(z_coefficients=z_entropy_coefficients,
                              theta_coefficients=theta_entropy_coefficients):
    """General increments against the closed forms at interior points with random increments."""
    rng = make_generator(SEED + 4)
    dt = 1e-3
    z_system = pure_state_sde(0.0)
    z = rng.uniform(-0.9, 0.9, size=(200, 1))
    dz = rng.normal(0.0, math.sqrt(dt), size=(200, 1))
    general, _ = make_entropy_increment(z_system, "general")(z, dz, dt)
    closed, _ = closed_form_increment_z(z, dz, dt, z_coefficients)
    worst = np.max(np.abs(general - closed))

    theta_system = theta_sde()
    theta = rng.uniform(0.05, math.pi - 0.05, size=(200, 1))
    dtheta = rng.normal(0.0, math.sqrt(dt), size=(200, 1))
    general, _ = make_entropy_increment(theta_system, "general")(theta, dtheta, dt)
    closed, _ = closed_form_increment_theta(theta, dtheta, dt, theta_coefficients)
    worst = max(worst, np.max(np.abs(general - closed)))
    return _within("entropy-consistency", worst, 1e-8)


def _reduced_entropy_fields(reduced, point, h):
    """u = D^-1 (A - V) on the reduced system with V by central differences."""
    def D_entry(i, m):
        return lambda q: reduced.diffusion(q)[i, m]

    D = reduced.diffusion(point)
    V = np.array([sum(central_gradient(D_entry(i, m), point, h)[m] for m in range(2)) for i in range(2)])
    return np.linalg.solve(D, reduced.drift(point) - V)


def check_reduced_entropy(point=(0.5, 0.5)):
    """General increment of the (x, z) system against a numeric expansion of the same formula."""
    system = raising_lowering_sde()
    reduced, rmap = reduce(system, [1], initial=CANONICAL_POINT)
    entropy = environmental_entropy(reduced, rmap)
    point = np.asarray(point, dtype=float)
    inner, outer = 1e-6, 1e-4
    u = _reduced_entropy_fields(reduced, point, inner)
    D = reduced.diffusion(point)
    dt_term = 0.0
    for i in range(2):
        grad = central_gradient(lambda q: _reduced_entropy_fields(reduced, q, inner)[i], point, outer)
        dt_term += sum(D[i, k] * grad[k] for k in range(2))
    u_symbolic, dt_symbolic, _ = entropy.fields(point)
    residual = max(np.max(np.abs(u_symbolic - u)), abs(dt_symbolic - dt_term))
    return _within("reduced-entropy", residual, 1e-5, "dt term=%.10g" % dt_symbolic)


def check_stationary_balance():
    pdf = stationary_pdf_theta()
    balance = stationary_drift_balance(pdf, lambda theta: theta_entropy_coefficients(theta)[0])
    return _within("stationary-balance", abs(balance), 1e-8)


def check_boundary_terms():
    z_term = stationary_boundary_term(pure_state_sde(0.0), stationary_pdf_z())
    theta_term = stationary_boundary_term(theta_sde(), stationary_pdf_theta())
    c_term = stationary_boundary_term(multiplicative_sde(), stationary_pdf_multiplicative())
    residual = max(abs(z_term), abs(theta_term), abs(c_term - MULTIPLICATIVE_DP_LIMIT))
    return _within("boundary-terms", residual, 1e-8, "[D p] multiplicative=%.10g" % c_term)


def check_multiplicative_oracle(cells=ORACLE_CELLS):
    system = multiplicative_sde()
    grid = fpe_stationary_1d(system, geometric_edges(MULTIPLICATIVE_DOMAIN[0], MULTIPLICATIVE_DOMAIN[1], cells))
    exact = stationary_pdf_multiplicative().density(grid.centers)
    l1 = float(np.sum(np.abs(grid.density - exact) * grid.widths))
    dp = boundary_term_mean(system, grid)
    residual = max(l1, abs(dp - MULTIPLICATIVE_DP_LIMIT))
    return _within("multiplicative-oracle", residual, 1e-3, "L1=%.3g [D p]=%.8g" % (l1, dp))


def check_boundary_pathology(cells=REFINEMENT_CELLS):
    """[D dp/dz] at z = +-1 grows under refinement while [D dp/dtheta] at 0, pi shrinks."""
    z_system = pure_state_sde(0.0)
    theta_system = theta_sde()
    z_terms, theta_terms = [], []
    for n in cells:
        z_grid = fpe_stationary_1d(z_system, uniform_edges(-1.0, 1.0, n))
        theta_grid = fpe_stationary_1d(theta_system, uniform_edges(0.0, math.pi, n))
        z_terms.append(abs(boundary_gradient_term(z_system, z_grid)))
        theta_terms.append(abs(boundary_gradient_term(theta_system, theta_grid)))
    grows = all(b > a for a, b in zip(z_terms[:-1], z_terms[1:]))
    shrinks = all(b < a for a, b in zip(theta_terms[:-1], theta_terms[1:]))
    records = ds_sys_mean([theta_grid], theta_system)
    extreme = abs(records[0].extreme_term) + abs(records[0].current_log_term)
    message = "z: %s theta: %s" % (", ".join("%.3g" % v for v in z_terms), ", ".join("%.3g" % v for v in theta_terms))
    residual = theta_terms[-1] + extreme
    return CheckResult("boundary-pathology", grows and shrinks and residual <= 1e-2, residual, 1e-2, message)


def _invariant_level():
    return float(constant_of_motion_expr().subs(dict(zip((X, Y, Z), CANONICAL_POINT))))


def check_invariant_projection(dt=DT, steps=1000, seed=SEED):
    """Relative drift of f along a raising-lowering path put back on its level set every step."""
    system = raising_lowering_sde()
    _, rmap = reduce(system, [1], initial=CANONICAL_POINT)
    trajectory = run_trajectory(system, IntegratorConfig(dt=dt, steps=steps, seed=seed), CANONICAL_POINT,
                                invariant_map=rmap)
    level = _invariant_level()
    f = np.array([constant_of_motion(r) for r in trajectory.states])
    drift = float(np.max(np.abs(f - level))) / level
    return _within("invariant-projection", drift, 1e-2, "f=%.12g after %d steps of %g" % (f[-1], steps, dt))


def _final_invariant_drift(paths, level):
    x, y, z = paths[:, -1, 0], paths[:, -1, 1], paths[:, -1, 2]
    return (1.0 - x * x - z * z) / (y * y) - level


def check_dt_refinement(n_paths=REFINEMENT_PATHS, dt=REFINEMENT_DT, steps=REFINEMENT_STEPS, seed=SEED):
    """Unprojected drift of f at dt and 2 dt with the coarse run driven by summed fine increments."""
    system = raising_lowering_sde()
    level = _invariant_level()
    increments = draw_increments(seed, n_paths, steps, system.noise_count, dt)
    fine = _final_invariant_drift(integrate_with_increments(system, CANONICAL_POINT, increments, dt), level)
    coarse = _final_invariant_drift(
        integrate_with_increments(system, CANONICAL_POINT, coarsen_increments(increments, 2), 2.0 * dt), level)
    fine_rms = math.sqrt(float(np.mean(fine ** 2)))
    coarse_rms = math.sqrt(float(np.mean(coarse ** 2)))
    ratio = fine_rms / coarse_rms
    low, high = REFINEMENT_RATIO_RANGE
    message = "rms f drift %.3g at dt=%g, %.3g at dt=%g" % (fine_rms, dt, coarse_rms, 2.0 * dt)
    return CheckResult("dt-refinement", low <= ratio <= high, ratio, high, message)


def check_weak_convergence(n_paths=WEAK_PATHS, t_end=WEAK_T, dts=WEAK_DTS, seed=SEED):
    """Mean of z for the pure-state model at three step sizes sharing one noise draw.

    Successive differences of the mean shrink with the step size for a first-order weak
    scheme, and the extrapolation 2 m(dt/2) - m(dt) from the two finest runs matches
    z0 exp(-2 t) within three standard errors.
    """
    system = pure_state_sde(0.0)
    z0 = 0.5
    finest = dts[-1]
    steps = int(round(t_end / finest))
    increments = draw_increments(seed, n_paths, steps, system.noise_count, finest)
    finals = []
    for dt in dts:
        coarse = coarsen_increments(increments, int(round(dt / finest)))
        finals.append(integrate_with_increments(system, [z0], coarse, dt)[:, -1, 0])
    means = [float(np.mean(f)) for f in finals]
    ratio = (means[1] - means[2]) / (means[0] - means[1])
    extrapolated = 2.0 * finals[2] - finals[1]
    error = abs(float(np.mean(extrapolated)) - z0 * math.exp(-2.0 * t_end))
    standard_error = float(np.std(extrapolated)) / math.sqrt(n_paths)
    low, high = WEAK_RATIO_RANGE
    passed = low <= ratio <= high and error <= 3.0 * standard_error
    message = "means %s, extrapolated error %.3g (SE %.3g)" % (", ".join("%.5f" % m for m in means), error,
                                                                standard_error)
    return CheckResult("weak-convergence", passed, ratio, high, message)


CHECKS = [
    ("constant-of-motion", check_constant_of_motion),
    ("null-eigenvector", check_null_eigenvector),
    ("reduced-diffusion", check_reduced_diffusion),
    ("lindblad-closed-forms", check_lindblad_closed_forms),
    ("purity-sde", check_purity_sde),
    ("ito-theta-transform", check_ito_theta_transform),
    ("entropy-consistency", check_entropy_consistency),
    ("reduced-entropy", check_reduced_entropy),
    ("stationary-balance", check_stationary_balance),
    ("boundary-terms", check_boundary_terms),
    ("multiplicative-oracle", check_multiplicative_oracle),
    ("boundary-pathology", check_boundary_pathology),
    ("invariant-projection", check_invariant_projection),
    ("dt-refinement", check_dt_refinement),
    ("weak-convergence", check_weak_convergence),
]


def run_checks(names=None):
    """Run the named checks (all by default); a check that raises counts as failed."""
    selected = [(name, fn) for name, fn in CHECKS if names is None or name in names]
    results = []
    for name, fn in selected:
        logger.info("Running check %s" % name)
        try:
            result = fn()
        except Exception as e:
            logger.error("Check %s raised %s" % (name, str(e)))
            logger.debug(traceback.format_exc())
            result = CheckResult(name, False, float("nan"), float("nan"), "%s: %s" % (e.__class__.__name__, str(e)))
        if not result.passed:
            logger.warning("Check failed: %s" % str(result))
        results.append(result)
    return results
