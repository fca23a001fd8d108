import logging
import math

import numpy as np
import sympy as sp
from sympy.polys.polyerrors import PolynomialError

from .defaults import EPS_SING, EPS_SING_NEIGHBOURHOOD, UNRESOLVED_STEP_TOL, SINGULAR_DET_TOL, P_FLOOR
from .errors import SingularDiffusionError, SingularityError, ConfigError, NumericalError
from .sde_system import compile_expr

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


class EntropyLedger:
    """Cumulative stochastic entropy production along one trajectory, in units of k_B."""

    def __init__(self, ds_env, ds_sys=None, flagged=0):
        self.ds_env = np.asarray(ds_env, dtype=float)
        self.ds_sys = None if ds_sys is None else np.asarray(ds_sys, dtype=float)
        self.ds_tot = None if ds_sys is None else self.ds_sys + self.ds_env
        self.flagged = flagged

    def check(self):
        if self.ds_tot is not None and not np.allclose(self.ds_tot - self.ds_sys, self.ds_env, rtol=1e-12, atol=1e-12):
            raise NumericalError("Entropy ledger out of balance: ds_tot != ds_sys + ds_env")
        return True

    def __str__(self):
        total = self.ds_env[-1] if len(self.ds_env) else 0.0
        return "<%s(ds_env=%g, flagged=%d)>" % (self.__class__.__name__, total, self.flagged)

    def __repr__(self):
        return str(self)


def _tidy(expr):
    try:
        return sp.cancel(sp.together(expr))
    except (PolynomialError, TypeError):
        return expr


def _parity_split(drift, symbols, parity):
    flipped = dict((s, e * s) for s, e in zip(symbols, parity))
    mirrored = [e * a.subs(flipped, simultaneous=True) for a, e in zip(drift, parity)]
    irreversible = [sp.expand((a + m) / 2) for a, m in zip(drift, mirrored)]
    reversible = [sp.expand((a - m) / 2) for a, m in zip(drift, mirrored)]
    return irreversible, reversible


class EnvironmentalEntropy:
    """Environmental entropy increment of an Ito system with non-singular diffusion.

    With u = D^-1 (A^irr - V) and V_i = sum_m dD_im/dx_m, the increment is
        u . dx + [sum_ik D_ik du_i/dx_k - div A^rev - A^rev . u] dt.
    When a ReductionMap with spectators is given, all derivatives are taken along the
    invariant surface and fields are evaluated at the reconstructed full point.
    """

    def __init__(self, system, reduction_map=None):
        self.system = system
        self.reduction_map = reduction_map
        if reduction_map is not None and not reduction_map.is_identity:
            full = reduction_map.system
            rows = list(reduction_map.dynamical)
            drift = [full.drift_expr[i] for i in rows]
            D = full.diffusion_expr.extract(rows, rows)
            irreversible, reversible = _parity_split(drift, full.symbols, full.parity)
            self.symbols = full.symbols

            def derivative(expr, m):
                return reduction_map.modified_derivative(expr, m)
        else:
            D = system.diffusion_expr
            irreversible, reversible = _parity_split(list(system.drift_expr), system.symbols, system.parity)
            self.symbols = system.symbols

            def derivative(expr, m):
                return sp.diff(expr, system.symbols[m])

        n = D.shape[0]
        det = _tidy(D.det())
        if det == 0:
            # singular at every point, so the symbols stand for the state
            raise SingularDiffusionError(tuple(self.symbols), det=0, system=system.name)
        D_inv = D.adjugate() / det
        V = [sum(derivative(D[i, m], m) for m in range(n)) for i in range(n)]
        u = [_tidy(sum(D_inv[i, j] * (irreversible[j] - V[j]) for j in range(n))) for i in range(n)]
        dt_term = sum(D[i, k] * derivative(u[i], k) for i in range(n) for k in range(n))
        dt_term -= sum(derivative(reversible[i], i) for i in range(n))
        dt_term -= sum(reversible[i] * u[i] for i in range(n))

        self.dimension = n
        self.det_expr = det
        self.trace_expr = _tidy(D.trace())
        self.u_expr = u
        self.dt_expr = _tidy(dt_term)
        self._compiled = None
        logger.debug("Environmental entropy of %s: u=%s, dt term=%s" % (system.name, str(u), str(self.dt_expr)))

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_compiled"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    def _functions(self):
        if self._compiled is None:
            self._compiled = ([compile_expr(e, self.symbols) for e in self.u_expr],
                              compile_expr(self.dt_expr, self.symbols),
                              compile_expr(self.det_expr, self.symbols),
                              compile_expr(self.trace_expr, self.symbols))
        return self._compiled

    def _points(self, states):
        states = np.asarray(states, dtype=float)
        if self.reduction_map is not None and not self.reduction_map.is_identity:
            return self.reduction_map.reconstruct(states)
        return states

    def fields(self, states):
        """u, the dt term and det D at states (dynamical coordinates on the last axis)."""
        u_fns, dt_fn, det_fn, _ = self._functions()
        points = self._points(states)
        u = np.stack([f(points) for f in u_fns], axis=-1)
        return u, dt_fn(points), det_fn(points)

    def conditioning(self, states):
        """det D / (tr D / N)^N: 1 for isotropic diffusion, 0 on the singular set of D."""
        _, _, det_fn, trace_fn = self._functions()
        points = self._points(states)
        with np.errstate(divide="ignore", invalid="ignore"):
            return det_fn(points) / (trace_fn(points) / self.dimension) ** self.dimension

    def singular_neighbourhood(self, states, dx, dt, u=None):
        """Mask of steps the Ito sum cannot resolve near the singular set of D.

        A step is flagged when it starts where the conditioning is below EPS_SING_NEIGHBOURHOOD * dt,
        or when the change of u across the step, contracted with dx, exceeds UNRESOLVED_STEP_TOL.
        Both neighbourhoods shrink as dt -> 0.
        """
        states = np.asarray(states, dtype=float)
        dx = np.asarray(dx, dtype=float)
        if u is None:
            u = self.fields(states)[0]
        u_end = self.fields(states + dx)[0]
        with np.errstate(invalid="ignore"):
            remainder = np.abs(np.sum((u_end - u) * dx, axis=-1))
        return ~(self.conditioning(states) > EPS_SING_NEIGHBOURHOOD * dt) | ~(remainder <= UNRESOLVED_STEP_TOL)

    def increment(self, states, dx, dt):
        """Vectorized increments and a mask of flagged steps (increment zeroed).

        Steps are flagged at singular or non-finite points and inside the singular neighbourhood.
        """
        states = np.asarray(states, dtype=float)
        dx = np.asarray(dx, dtype=float)
        u, dt_term, det = self.fields(states)
        value = np.sum(u * dx, axis=-1) + dt_term * dt
        flagged = (~np.isfinite(value) | ~(np.abs(det) > SINGULAR_DET_TOL)
                   | self.singular_neighbourhood(states, dx, dt, u=u))
        return np.where(flagged, 0.0, value), flagged

    def coefficients(self, states):
        """Drift and per-noise coefficients of the entropy SDE under the system's own dynamics."""
        states = np.asarray(states, dtype=float)
        u, dt_term, _ = self.fields(states)
        A = self.system.drift(states)
        B = self.system.noise(states)
        drift = np.sum(u * A, axis=-1) + dt_term
        noise = np.einsum("...i,...im->...m", u, B)
        return drift, noise

    def at(self, state, dx, dt):
        state = self.system.check_point(state)
        u, dt_term, det = self.fields(state)
        if not abs(det) > SINGULAR_DET_TOL:
            raise SingularDiffusionError(state, det=float(det))
        value = float(np.dot(u, np.asarray(dx, dtype=float).reshape(-1)) + dt_term * dt)
        if not math.isfinite(value):
            raise SingularDiffusionError(state, det=float(det))
        return value


_GENERAL_CACHE = {}


def environmental_entropy(system, reduction_map=None):
    key = (id(system), id(reduction_map))
    cached = _GENERAL_CACHE.get(key)
    if cached is None or cached[0] is not system or cached[1] is not reduction_map:
        cached = (system, reduction_map, EnvironmentalEntropy(system, reduction_map))
        _GENERAL_CACHE[key] = cached
    return cached[2]


def ds_env_general(system, reduction_map, state, dx, dt):
    return environmental_entropy(system, reduction_map).at(state, dx, dt)


def z_entropy_coefficients(z):
    """Drift and noise coefficients of the environmental entropy SDE for the pure state in z."""
    z = np.asarray(z, dtype=float)
    z2 = z * z
    with np.errstate(divide="ignore", invalid="ignore"):
        drift = 2.0 * (-1.0 - 7.0 * z2 * z2 + 8.0 * z2 + 2.0 * z2 * z2 * z2) / (1.0 - z2 * z2)
        noise = 2.0 * SQRT2 * z * (2.0 * z2 - 1.0) / np.sqrt(1.0 - z2 * z2)
    return drift, noise


def theta_entropy_coefficients(theta):
    """Drift and noise coefficients of the environmental entropy SDE in the angle frame; no boundary singularity."""
    theta = np.asarray(theta, dtype=float)
    c2 = np.cos(theta) ** 2
    s2t = np.sin(2.0 * theta)
    drift = (6.0 + 18.0 * np.cos(2.0 * theta) + 3.0 * s2t * s2t) / (4.0 * (1.0 + c2))
    noise = 3.0 * s2t / (SQRT2 * np.sqrt(1.0 + c2))
    return drift, noise


def _z_wiener(z, dz, dt):
    with np.errstate(divide="ignore", invalid="ignore"):
        return (dz + 2.0 * z * dt) / np.sqrt(2.0 * (1.0 - z ** 4))


def _theta_wiener(theta, dtheta, dt):
    return (dtheta - 0.5 * np.sin(2.0 * theta) * dt) / np.sqrt(2.0 * (1.0 + np.cos(theta) ** 2))


def closed_form_increment_z(states, dx, dt, coefficients=z_entropy_coefficients, eps=EPS_SING):
    z = np.asarray(states, dtype=float)[..., 0]
    dz = np.asarray(dx, dtype=float)[..., 0]
    drift, noise = coefficients(z)
    value = drift * dt + noise * _z_wiener(z, dz, dt)
    flagged = (np.abs(z) > 1.0 - eps) | ~np.isfinite(value)
    return np.where(flagged, 0.0, value), flagged


def closed_form_increment_theta(states, dx, dt, coefficients=theta_entropy_coefficients):
    theta = np.asarray(states, dtype=float)[..., 0]
    dtheta = np.asarray(dx, dtype=float)[..., 0]
    drift, noise = coefficients(theta)
    value = drift * dt + noise * _theta_wiener(theta, dtheta, dt)
    flagged = ~np.isfinite(value)
    return np.where(flagged, 0.0, value), flagged


def ds_env_z(z, dz, dt, eps=EPS_SING):
    if abs(z) > 1.0 - eps:
        raise SingularityError(z, eps)
    drift, noise = z_entropy_coefficients(z)
    return float(drift * dt + noise * _z_wiener(z, dz, dt))


def ds_env_theta(theta, dtheta, dt):
    drift, noise = theta_entropy_coefficients(theta)
    return float(drift * dt + noise * _theta_wiener(theta, dtheta, dt))


def _require_pure(system, family):
    if not system.name.startswith(family) or system.parameters.get("gamma", 0.0) != 0.0:
        raise ConfigError("Closed-form %s entropy applies to the %s model with gamma = 0, not %s" % (
            family, family, system.name))


def make_entropy_increment(system, method, reduction_map=None, coefficients=None):
    """Vectorized (states, dx, dt) -> (increment, flagged) for the given method."""
    if method == "general":
        return environmental_entropy(system, reduction_map).increment
    if method == "closed-form-z":
        _require_pure(system, "pure-z")
        coefficients = coefficients or z_entropy_coefficients
        return lambda states, dx, dt: closed_form_increment_z(states, dx, dt, coefficients)
    if method == "closed-form-theta":
        _require_pure(system, "pure-theta")
        coefficients = coefficients or theta_entropy_coefficients
        return lambda states, dx, dt: closed_form_increment_theta(states, dx, dt, coefficients)
    raise ConfigError("Unknown entropy method %s" % method)


_METHOD_LABELS = {"closed-form-z": ("z",), "closed-form-theta": ("theta",)}


def attach_entropy(trajectory, method, system=None, reduction_map=None):
    """Accumulate environmental entropy over the recorded samples of a trajectory.

    Steps at singular points are skipped and counted in the ledger's flagged total.
    """
    if method in _METHOD_LABELS and tuple(trajectory.labels) != _METHOD_LABELS[method]:
        raise ConfigError("Method %s needs coordinates %s, trajectory has %s" % (
            method, str(_METHOD_LABELS[method]), str(trajectory.labels)))
    if method == "general":
        if system is None:
            raise ConfigError("The general method needs the system the trajectory was simulated with")
        increment = make_entropy_increment(system, method, reduction_map)
    elif method == "closed-form-z":
        increment = closed_form_increment_z
    elif method == "closed-form-theta":
        increment = closed_form_increment_theta
    else:
        raise ConfigError("Unknown entropy method %s" % method)

    states = np.asarray(trajectory.states, dtype=float)
    dts = np.diff(trajectory.times)
    values, flagged = increment(states[:-1], np.diff(states, axis=0), dts)
    n_flagged = int(np.sum(flagged))
    if n_flagged:
        first = int(np.nonzero(flagged)[0][0])
        logger.warning("%d singular steps skipped, first at t=%g state %s" % (
            n_flagged, trajectory.times[first], str(states[first])))
    ds_env = np.concatenate([[0.0], np.cumsum(values)])
    trajectory.ds_env = ds_env
    trajectory.flagged = n_flagged
    trajectory.ledger = EntropyLedger(ds_env, flagged=n_flagged)
    return trajectory


def attach_system_entropy(trajectory, series):
    """Trajectory-level system entropy -ln p(x_t, t) + ln p(x_0, 0) from an FPE-solved pdf series.

    series holds one Pdf1DGrid per recorded sample of the trajectory.
    """
    if len(series) != len(trajectory.times):
        raise ConfigError("Need one pdf per recorded sample: %d pdfs for %d samples" % (
            len(series), len(trajectory.times)))
    x = np.asarray(trajectory.states, dtype=float)[:, 0]
    log_p = np.array([math.log(max(pdf.density_at(xi), P_FLOOR)) for pdf, xi in zip(series, x)])
    ds_sys = -(log_p - log_p[0])
    ds_env = trajectory.ds_env if trajectory.ds_env is not None else np.zeros_like(ds_sys)
    trajectory.ledger = EntropyLedger(ds_env, ds_sys=ds_sys, flagged=trajectory.flagged)
    trajectory.ledger.check()
    trajectory.ds_sys = trajectory.ledger.ds_sys
    trajectory.ds_tot = trajectory.ledger.ds_tot
    return trajectory
