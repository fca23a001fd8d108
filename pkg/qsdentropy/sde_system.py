import logging

import numpy as np
import sympy as sp

from .errors import ModelError

logger = logging.getLogger(__name__)


def clamped_sqrt(value):
    return np.sqrt(np.maximum(value, 0.0))


_ClampedSqrt = sp.Function("clamped_sqrt")


def _clamp_half_powers(expr):
    """Rewrite b**(p/2) as clamped_sqrt(b)**p so that tiny negative arguments evaluate as zero."""
    return expr.replace(
        lambda e: e.is_Pow and e.exp.is_Rational and e.exp.q == 2,
        lambda e: _ClampedSqrt(e.base) ** e.exp.p)


def compile_expr(expr, symbols):
    """Return a vectorized evaluator of expr taking states with the coordinates on the last axis."""
    fn = sp.lambdify(list(symbols), _clamp_half_powers(sp.sympify(expr)),
                     modules=[{"clamped_sqrt": clamped_sqrt}, "numpy"])
    n = len(symbols)

    def evaluate(states):
        states = np.asarray(states, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            value = fn(*[states[..., i] for i in range(n)])
        return np.broadcast_to(np.asarray(value, dtype=float), states.shape[:-1])

    return evaluate


def compile_matrix(matrix, symbols):
    """Vectorized evaluator of a sympy matrix, returning shape states.shape[:-1] + (rows, cols)."""
    matrix = sp.Matrix(matrix)
    rows, cols = matrix.shape
    entries = [_clamp_half_powers(sp.sympify(e)) for e in matrix]
    fn = sp.lambdify(list(symbols), entries, modules=[{"clamped_sqrt": clamped_sqrt}, "numpy"])
    n = len(symbols)

    def evaluate(states):
        states = np.asarray(states, dtype=float)
        batch = states.shape[:-1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            values = fn(*[states[..., i] for i in range(n)])
        out = np.empty(batch + (rows * cols,))
        for k, value in enumerate(values):
            out[..., k] = np.broadcast_to(np.asarray(value, dtype=float), batch)
        return out.reshape(batch + (rows, cols))

    return evaluate


class Domain:
    """Phase-space domain of a system together with the projection applied after each step.

    kind is one of "clamp" (coordinatewise interval, values outside are clamped), "reflect"
    (coordinatewise interval, values outside are mirrored back), "ball" (unit ball in all
    coordinates, renormalized only on overshoot) or "none".
    """

    KINDS = ("clamp", "reflect", "ball", "none")

    def __init__(self, kind="none", lower=-np.inf, upper=np.inf):
        if kind not in self.KINDS:
            raise ModelError("Unknown domain kind %s" % kind)
        self.kind = kind
        self.lower = float(lower)
        self.upper = float(upper)

    def contains(self, point, tol=1e-9):
        point = np.asarray(point, dtype=float)
        if not np.all(np.isfinite(point)):
            return False
        if self.kind == "ball":
            return float(np.sum(point * point)) <= 1.0 + tol
        if self.kind in ("clamp", "reflect"):
            return bool(np.all(point >= self.lower - tol) and np.all(point <= self.upper + tol))
        return True

    def project(self, states):
        states = np.asarray(states, dtype=float)
        if self.kind == "clamp":
            return np.clip(states, self.lower, self.upper)
        if self.kind == "reflect":
            reflected = np.where(states < self.lower, 2.0 * self.lower - states, states)
            if np.isfinite(self.upper):
                reflected = np.where(reflected > self.upper, 2.0 * self.upper - reflected, reflected)
            return np.clip(reflected, self.lower, self.upper)
        if self.kind == "ball":
            norm = np.sqrt(np.sum(states * states, axis=-1, keepdims=True))
            safe = np.where(norm > 1.0, norm, 1.0)
            return states / safe
        return states

    def __str__(self):
        if self.kind in ("clamp", "reflect"):
            return "<%s(%s, [%g, %g])>" % (self.__class__.__name__, self.kind, self.lower, self.upper)
        return "<%s(%s)>" % (self.__class__.__name__, self.kind)

    def __repr__(self):
        return str(self)


class SdeSystem:
    """Ito SDE dx = A(x) dt + B(x) dW defined by sympy expressions.

    The drift is a list of N expressions, the noise an N x M matrix. A one-dimensional
    system may instead be given by its diffusion coefficient D, in which case the noise
    is sqrt(2 D) with the argument clamped at zero on evaluation.
    """

    def __init__(self, name, symbols, drift, noise=None, diffusion=None, labels=None, parity=None,
                 domain=None, invariants=None, parameters=None):
        self.name = name
        self.symbols = tuple(symbols)
        self.dimension = len(self.symbols)
        self.drift_expr = sp.Matrix(list(drift))
        if self.drift_expr.shape != (self.dimension, 1):
            raise ModelError("Drift of %s has %d entries for %d coordinates" % (
                name, self.drift_expr.shape[0], self.dimension))

        if noise is None and diffusion is None:
            raise ModelError("System %s needs a noise matrix or a diffusion coefficient" % name)
        if noise is not None:
            self.noise_expr = sp.Matrix(noise)
            if self.noise_expr.shape[0] != self.dimension:
                raise ModelError("Noise matrix of %s has %d rows for %d coordinates" % (
                    name, self.noise_expr.shape[0], self.dimension))
            self.diffusion_expr = (self.noise_expr * self.noise_expr.T / 2).applyfunc(sp.expand)
        else:
            if self.dimension != 1:
                raise ModelError("A scalar diffusion coefficient only defines one-dimensional systems")
            self.diffusion_expr = sp.Matrix([[sp.sympify(diffusion)]])
            self.noise_expr = sp.Matrix([[sp.sqrt(2 * self.diffusion_expr[0, 0])]])
        self.noise_count = self.noise_expr.shape[1]
        if self.noise_count > self.dimension:
            raise ModelError("System %s has more noise terms (%d) than coordinates (%d)" % (
                name, self.noise_count, self.dimension))

        self.labels = tuple(labels) if labels is not None else tuple(str(s) for s in self.symbols)
        self.parity = tuple(parity) if parity is not None else (1,) * self.dimension
        if len(self.parity) != self.dimension or any(e not in (1, -1) for e in self.parity):
            raise ModelError("Parity of %s must be +1 or -1 for each of %d coordinates" % (name, self.dimension))
        self.domain = domain if domain is not None else Domain()
        self.invariants = list(invariants or [])
        self.parameters = dict(parameters or {})
        self._compile()

    def _compile(self):
        self._drift_fn = compile_matrix(self.drift_expr, self.symbols)
        self._noise_fn = compile_matrix(self.noise_expr, self.symbols)
        self._diffusion_fn = compile_matrix(self.diffusion_expr, self.symbols)
        self._cache = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        for name in ("_drift_fn", "_noise_fn", "_diffusion_fn", "_cache"):
            state.pop(name, None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._compile()

    def compiled(self, expr):
        expr = sp.sympify(expr)
        fn = self._cache.get(expr)
        if fn is None:
            fn = self._cache[expr] = compile_expr(expr, self.symbols)
        return fn

    def evaluate(self, expr, states):
        return self.compiled(expr)(states)

    def drift(self, states):
        return self._drift_fn(states)[..., 0]

    def noise(self, states):
        return self._noise_fn(states)

    def diffusion(self, states):
        return self._diffusion_fn(states)

    def derivative(self, expr, index):
        return sp.diff(expr, self.symbols[index])

    @property
    def is_one_dimensional(self):
        return self.dimension == 1

    def check_point(self, point):
        point = np.asarray(point, dtype=float).reshape(-1)
        if point.size != self.dimension:
            raise ModelError("Point %s has %d coordinates, system %s expects %d" % (
                str(point), point.size, self.name, self.dimension))
        return point

    def __str__(self):
        return "<%s(%s, N=%d, M=%d, %s)>" % (self.__class__.__name__, self.name, self.dimension, self.noise_count,
                                             ",".join(self.labels))

    def __repr__(self):
        return str(self)


def central_gradient(f, point, h):
    point = np.asarray(point, dtype=float)
    grad = np.zeros(point.size)
    for i in range(point.size):
        step = np.zeros(point.size)
        step[i] = h
        grad[i] = (f(point + step) - f(point - step)) / (2.0 * h)
    return grad


def central_hessian(f, point, h):
    point = np.asarray(point, dtype=float)
    n = point.size
    hess = np.zeros((n, n))
    f0 = f(point)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        hess[i, i] = (f(point + ei) - 2.0 * f0 + f(point - ei)) / (h * h)
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            value = (f(point + ei + ej) - f(point + ei - ej) - f(point - ei + ej) + f(point - ei - ej)) / (
                4.0 * h * h)
            hess[i, j] = value
            hess[j, i] = value
    return hess


def central_derivative(f, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def central_second_derivative(f, x, h):
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
