import logging
import warnings

import numpy as np
import sympy as sp

from .defaults import NULL_SPACE_TOL, AMBIGUOUS_RANK_FACTOR, FD_STEP, VERIFY_FD_STEP
from .errors import ReductionError, AmbiguousRankWarning, ModelError
from .sde_system import SdeSystem, Domain, compile_expr, central_gradient, central_hessian

logger = logging.getLogger(__name__)


def diffusion_matrix(system, point):
    """D = B B^T / 2 at a point; a 1x1 matrix for one-dimensional systems."""
    point = system.check_point(point)
    B = system.noise(point)
    return 0.5 * B.dot(B.T)


def null_eigenvectors(D, tol=NULL_SPACE_TOL):
    """Orthonormal basis of the eigenspace of D with eigenvalues below tol times the largest one."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    D = 0.5 * (D + D.T)
    w, v = np.linalg.eigh(D)
    scale = np.max(np.abs(w))
    threshold = tol * scale if scale > 0 else tol
    null = [v[:, i] for i in range(len(w)) if w[i] < threshold]
    ambiguous = [w[i] for i in range(len(w)) if threshold <= w[i] < AMBIGUOUS_RANK_FACTOR * threshold]
    if ambiguous:
        warnings.warn("Eigenvalues %s are within a factor %g of the null-space threshold %g" % (
            str(ambiguous), AMBIGUOUS_RANK_FACTOR, threshold), AmbiguousRankWarning)
        logger.warning("Ambiguous rank of diffusion matrix: eigenvalues %s" % str(w))
    return null


class ReductionMap:
    """Partition of coordinates into dynamical and spectator sets tied together by invariants.

    The invariants f_k(x) = c_k define the spectators as functions of the dynamical
    coordinates. Their gradients are null eigenvectors of D and give P (spectator
    components), Q (dynamical components) and R = -P^-1 Q, so that dx_l = R_lm dx_m on
    the invariant surface.
    """

    def __init__(self, system, dynamical, spectators, invariants=(), levels=(), reconstruction=None):
        self.system = system
        self.dynamical = tuple(dynamical)
        self.spectators = tuple(spectators)
        self.invariants = list(invariants)
        self.levels = tuple(levels)
        self.reconstruction = reconstruction
        self._R = None
        self._cache = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    @property
    def is_identity(self):
        return not self.spectators

    @property
    def dynamical_symbols(self):
        return tuple(self.system.symbols[i] for i in self.dynamical)

    @property
    def spectator_symbols(self):
        return tuple(self.system.symbols[l] for l in self.spectators)

    def symbolic_R(self):
        """R as an L x M sympy matrix in the full coordinates."""
        if self._R is None:
            if self.is_identity:
                self._R = sp.zeros(0, len(self.dynamical))
            else:
                grads = [[sp.diff(f, s) for s in self.system.symbols] for _, f in self.invariants]
                P = sp.Matrix([[g[l] for l in self.spectators] for g in grads])
                Q = sp.Matrix([[g[m] for m in self.dynamical] for g in grads])
                self._R = (-P.inv() * Q).applyfunc(sp.simplify)
        return self._R

    def modified_derivative(self, expr, m):
        """d expr / d x_m along the invariant surface: the partial derivative plus sum_l d expr/dx_l R_lm.

        m indexes the dynamical coordinates (0 <= m < M).
        """
        symbols = self.system.symbols
        derivative = sp.diff(expr, symbols[self.dynamical[m]])
        if self.is_identity:
            return derivative
        R = self.symbolic_R()
        for k, l in enumerate(self.spectators):
            derivative += sp.diff(expr, symbols[l]) * R[k, m]
        return derivative

    def reconstruct(self, dynamical_states):
        """Full coordinates from dynamical coordinates; spectators follow from the invariant levels."""
        dynamical_states = np.asarray(dynamical_states, dtype=float)
        full = np.empty(dynamical_states.shape[:-1] + (self.system.dimension,))
        for k, i in enumerate(self.dynamical):
            full[..., i] = dynamical_states[..., k]
        if self.is_identity:
            return full
        if self.reconstruction is None:
            raise ReductionError("Spectator reconstruction needs invariant levels; pass an initial point to reduce")
        for k, l in enumerate(self.spectators):
            key = ("spectator", k)
            if key not in self._cache:
                self._cache[key] = compile_expr(self.reconstruction[k], self.dynamical_symbols)
            full[..., l] = self._cache[key](dynamical_states)
        return full

    def project(self, states):
        """Put full states back on the invariant level set by recomputing the spectators."""
        states = np.asarray(states, dtype=float)
        if self.is_identity:
            return states
        return self.reconstruct(states[..., list(self.dynamical)])

    def matrices(self, point, tol=NULL_SPACE_TOL):
        """Numeric (P, Q, R) at a full point from the null eigenvectors of D."""
        point = self.system.check_point(point)
        null = null_eigenvectors(diffusion_matrix(self.system, point), tol)
        if len(null) != len(self.spectators):
            raise ReductionError("Found %d null eigenvectors at %s, expected %d" % (len(null), str(point),
                                                                                   len(self.spectators)))
        alpha = np.array(null).reshape(len(null), self.system.dimension)
        P = alpha[:, list(self.spectators)]
        Q = alpha[:, list(self.dynamical)]
        try:
            R = -np.linalg.solve(P, Q)
        except np.linalg.LinAlgError:
            raise ReductionError("Singular P matrix at %s" % str(point))
        return P, Q, R

    def modified_gradient(self, field, point, h=FD_STEP):
        """Finite-difference modified derivatives of a callable field of the full coordinates."""
        point = self.system.check_point(point)
        grad = central_gradient(field, point, h)
        if self.is_identity:
            return grad[list(self.dynamical)]
        _, _, R = self.matrices(point)
        return grad[list(self.dynamical)] + grad[list(self.spectators)].dot(R)

    def __str__(self):
        return "<%s(%s, dynamical=%s, spectators=%s)>" % (self.__class__.__name__, self.system.name,
                                                          str(self.dynamical), str(self.spectators))

    def __repr__(self):
        return str(self)


def _solve_spectators(system, spectators, invariants, levels, initial):
    """Solve f_k = level_k for the spectators, keeping the branch that passes through the initial point."""
    spectator_symbols = [system.symbols[l] for l in spectators]
    equations = [sp.Eq(f, level) for (_, f), level in zip(invariants, levels)]
    solutions = sp.solve(equations, spectator_symbols, dict=True)
    if not solutions:
        raise ReductionError("Could not solve the invariants for spectators %s" % str(spectator_symbols))
    dynamical_values = {system.symbols[i]: initial[i] for i in range(system.dimension) if i not in spectators}
    target = np.array([initial[l] for l in spectators])
    best, best_distance = None, np.inf
    for solution in solutions:
        try:
            values = np.array([complex(solution[s].subs(dynamical_values)) for s in spectator_symbols])
        except (TypeError, KeyError):
            continue
        distance = np.max(np.abs(values - target))
        if distance < best_distance:
            best, best_distance = solution, distance
    if best is None or best_distance > 1e-8 * max(1.0, np.max(np.abs(target))):
        raise ReductionError("No branch of the spectator solution passes through %s" % str(initial))
    logger.info("Spectator branch %s selected" % str([best[s] for s in spectator_symbols]))
    return [best[s] for s in spectator_symbols]


def reduce(system, spectator_indices, invariants=None, initial=None):
    """Remove spectator coordinates tied to the dynamical ones by constants of the motion.

    Returns the reduced system in the dynamical coordinates and the ReductionMap. When an
    initial full point is given, the invariant levels and the spectator reconstruction are
    fixed from it and spectators remaining in the fields are substituted.
    """
    spectators = tuple(sorted(set(int(l) for l in spectator_indices)))
    if any(l < 0 or l >= system.dimension for l in spectators):
        raise ModelError("Spectator indices %s out of range for %s" % (str(spectators), system.name))
    dynamical = tuple(i for i in range(system.dimension) if i not in spectators)
    expected = system.dimension - system.noise_count
    if len(spectators) != expected:
        raise ReductionError("System %s needs %d spectators (N - M), got %d" % (system.name, expected,
                                                                               len(spectators)))
    if not spectators:
        logger.info("No spectators for %s; identity reduction" % system.name)
        return system, ReductionMap(system, dynamical, ())

    invariants = list(system.invariants if invariants is None else invariants)
    if len(invariants) != len(spectators):
        raise ReductionError("%d invariants supplied for %d spectators" % (len(invariants), len(spectators)))

    rmap = ReductionMap(system, dynamical, spectators, invariants)
    levels, reconstruction = (), None
    if initial is not None:
        initial = system.check_point(initial)
        substitution = dict(zip(system.symbols, initial))
        levels = tuple(float(f.subs(substitution)) for _, f in invariants)
        grads = [[sp.diff(f, s) for s in system.symbols] for _, f in invariants]
        P = np.array([[float(g[l].subs(substitution)) for l in spectators] for g in grads])
        if abs(np.linalg.det(P)) < 1e-12:
            raise ReductionError("Singular P matrix at the initial point %s" % str(initial))
        reconstruction = _solve_spectators(system, spectators, invariants, levels, initial)
        rmap.levels = levels
        rmap.reconstruction = reconstruction
        logger.info("Invariant levels %s fixed at %s" % (str(levels), str(initial)))

    rows = list(dynamical)
    drift = [system.drift_expr[i] for i in rows]
    noise = system.noise_expr.extract(rows, list(range(system.noise_count)))
    substitution = {}
    if reconstruction is not None:
        substitution = dict(zip(rmap.spectator_symbols, reconstruction))
    drift = [sp.simplify(e.subs(substitution)) for e in drift]
    noise = noise.subs(substitution)
    free = set().union(*[e.free_symbols for e in drift]) | noise.free_symbols
    leftover = free & set(rmap.spectator_symbols)
    if leftover:
        raise ReductionError("Reduced fields still depend on spectators %s; pass an initial point" % str(leftover))

    reduced = SdeSystem("%s/%s" % (system.name, "".join(system.labels[i] for i in dynamical)),
                        rmap.dynamical_symbols, drift, noise=noise,
                        labels=[system.labels[i] for i in dynamical],
                        parity=[system.parity[i] for i in dynamical],
                        domain=Domain("ball") if system.domain.kind == "ball" else system.domain,
                        parameters=dict(system.parameters, spectators=[system.labels[l] for l in spectators]))
    logger.info("Reduced %s to %s" % (str(system), str(reduced)))
    return reduced, rmap


def verify_constant(system, f, point, h=None):
    """Ito drift and noise coefficients of f along the system at point; both vanish for a constant of motion.

    f is either a sympy expression in the system's symbols (exact derivatives) or a callable
    of the coordinate vector (central differences with step h).
    """
    point = system.check_point(point)
    A = system.drift(point)
    B = system.noise(point)
    D = 0.5 * B.dot(B.T)
    if callable(f) and not isinstance(f, sp.Basic):
        step = VERIFY_FD_STEP if h is None else h
        grad = central_gradient(f, point, step)
        hess = central_hessian(f, point, step)
    else:
        substitution = dict(zip(system.symbols, point))
        grad = np.array([float(sp.diff(f, s).subs(substitution)) for s in system.symbols])
        hess = np.array([[float(sp.diff(f, s, t).subs(substitution)) for t in system.symbols]
                         for s in system.symbols])
    drift_residual = float(grad.dot(A) + np.sum(hess * D))
    noise_coefficients = grad.dot(B)
    return drift_residual, noise_coefficients
