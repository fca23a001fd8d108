import logging
import math

import numpy as np
import sympy as sp

from .defaults import IMAG_TOL, MAX_ABS_GAMMA
from .errors import ModelError
from .sde_system import SdeSystem, Domain, compile_expr

logger = logging.getLogger(__name__)

# Ladder operators in the basis where sigma_z = diag(1, -1).
C_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
C_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

X, Y, Z = sp.symbols("x y z", real=True)
THETA = sp.Symbol("theta", real=True)
X_POSITIVE = sp.Symbol("x", positive=True)

_SYMPY_PAULI = (sp.Matrix([[0, 1], [1, 0]]), sp.Matrix([[0, -sp.I], [sp.I, 0]]), sp.Matrix([[1, 0], [0, -1]]))


class LindbladOperator:
    def __init__(self, matrix, weight=1.0):
        self.matrix = np.asarray(matrix, dtype=complex)
        if self.matrix.shape != (2, 2):
            raise ModelError("Lindblad operator must be 2x2, got shape %s" % str(self.matrix.shape))
        self.weight = float(weight)
        if self.weight < 0:
            raise ModelError("Lindblad weight must be non-negative, got %g" % self.weight)

    def scaled(self):
        return math.sqrt(self.weight) * self.matrix

    def symbolic(self):
        return sp.sqrt(sp.nsimplify(self.weight, rational=True)) * sp.Matrix(
            [[sp.nsimplify(complex(v).real) + sp.I * sp.nsimplify(complex(v).imag) for v in row] for row in
             self.matrix])

    def __str__(self):
        return "<%s(%s, weight=%g)>" % (self.__class__.__name__, self.matrix.tolist(), self.weight)

    def __repr__(self):
        return str(self)


def _as_operator(c):
    return c if isinstance(c, LindbladOperator) else LindbladOperator(c)


def drift_increment(rho, c):
    """dt coefficient c rho c^+ - (rho c^+ c + c^+ c rho)/2 of one operator in the stochastic Lindblad equation."""
    rho = np.asarray(rho, dtype=complex)
    c = _as_operator(c).scaled()
    cd = c.conj().T
    cdc = cd.dot(c)
    return c.dot(rho).dot(cd) - 0.5 * rho.dot(cdc) - 0.5 * cdc.dot(rho)


def noise_increment(rho, c):
    """dW coefficient rho c^+ + c rho - Tr[(c + c^+) rho] rho of one operator."""
    rho = np.asarray(rho, dtype=complex)
    c = _as_operator(c).scaled()
    cd = c.conj().T
    return rho.dot(cd) + c.dot(rho) - np.trace((c + cd).dot(rho)) * rho


def _symbolic_rho():
    return (sp.eye(2) + X * _SYMPY_PAULI[0] + Y * _SYMPY_PAULI[1] + Z * _SYMPY_PAULI[2]) / 2


def _project(matrix):
    """Bloch components Tr(M sigma_i), checked to be real."""
    components = []
    rng = np.random.RandomState(0)
    samples = rng.uniform(-0.5, 0.5, size=(8, 3))
    for sigma in _SYMPY_PAULI:
        value = sp.expand((matrix * sigma).trace())
        re, im = value.as_real_imag()
        residual = np.max(np.abs(compile_expr(im, (X, Y, Z))(samples))) if im != 0 else 0.0
        if residual > IMAG_TOL:
            raise ModelError("Bloch projection has imaginary part %g; the operators do not give a real SDE" % residual)
        components.append(sp.expand(re))
    return components


def build_bloch_sde(ops, invariants=None, name="lindblad"):
    """Project the stochastic Lindblad equation onto Bloch coordinates.

    The drift is the sum of the drift increments of all operators; noise column j comes
    from operator j in the order given.
    """
    ops = [_as_operator(c) for c in ops]
    if not ops:
        raise ModelError("At least one Lindblad operator is required")
    rho = _symbolic_rho()
    drift_total = sp.zeros(2, 2)
    columns = []
    for op in ops:
        c = op.symbolic()
        cd = c.H
        cdc = cd * c
        drift_total += c * rho * cd - (rho * cdc + cdc * rho) / 2
        columns.append(_project(rho * cd + c * rho - ((c + cd) * rho).trace() * rho))
    drift = _project(drift_total)
    noise = sp.Matrix(3, len(ops), lambda i, j: columns[j][i])
    logger.debug("Built Bloch SDE %s with drift %s" % (name, str(drift)))
    return SdeSystem(name, (X, Y, Z), drift, noise=noise, labels=("x", "y", "z"), domain=Domain("ball"),
                     invariants=invariants,
                     parameters={"operators": [str(op) for op in ops]})


def constant_of_motion_expr():
    return (1 - X ** 2 - Z ** 2) / Y ** 2


def raising_lowering_sde():
    return build_bloch_sde([LindbladOperator(C_MINUS), LindbladOperator(C_PLUS)],
                           invariants=[("f", constant_of_motion_expr())], name="raising-lowering")


def _check_gamma(gamma):
    gamma = float(gamma)
    if not math.isfinite(gamma) or abs(gamma) >= MAX_ABS_GAMMA:
        raise ModelError("gamma must satisfy |gamma| < %g, got %g" % (MAX_ABS_GAMMA, gamma))
    return gamma


def weighted_sde(gamma):
    """Bloch SDE with unequal operator weights; its pure-circle z-drift is -(gamma + 2z)."""
    gamma = _check_gamma(gamma)
    ops = [LindbladOperator(C_MINUS, 1.0 - gamma / 2.0), LindbladOperator(C_PLUS, 1.0 + gamma / 2.0)]
    system = build_bloch_sde(ops, name="weighted:%g" % gamma)
    system.parameters["gamma"] = gamma
    return system


def pure_state_sde(gamma=0.0):
    gamma = _check_gamma(gamma)
    g = sp.nsimplify(gamma, rational=True)
    z = Z
    diffusion = sp.expand((1 - z ** 2) * (1 + g * z + z ** 2))
    return SdeSystem("pure-z:%g" % gamma, (z,), [-(g + 2 * z)], diffusion=diffusion, labels=("z",),
                     domain=Domain("clamp", -1.0, 1.0), parameters={"gamma": gamma})


def theta_sde():
    return SdeSystem("pure-theta", (THETA,), [sp.sin(2 * THETA) / 2], diffusion=1 + sp.cos(THETA) ** 2,
                     labels=("theta",), domain=Domain("reflect", 0.0, math.pi))


def multiplicative_sde():
    """dx = x dt + x^2 dW on x > 0, a system whose stationary [D p] does not vanish at infinity."""
    x = X_POSITIVE
    return SdeSystem("multiplicative", (x,), [x], noise=[[x ** 2]], labels=("x",),
                     domain=Domain("reflect", 0.0, np.inf))


def purity_expr():
    return (1 + X ** 2 + Y ** 2 + Z ** 2) / 2


def purity_drift_and_noise(system):
    """Ito drift and noise coefficients of the purity under a three-dimensional Bloch system."""
    p = purity_expr()
    grad = [sp.diff(p, s) for s in system.symbols]
    drift = sum(grad[i] * system.drift_expr[i] for i in range(3))
    drift += sum(sp.diff(p, system.symbols[i], system.symbols[j]) * system.diffusion_expr[i, j]
                 for i in range(3) for j in range(3))
    noise = [sp.expand(sum(grad[i] * system.noise_expr[i, j] for i in range(3))) for j in range(system.noise_count)]
    return sp.expand(drift), noise


def purity_closed_forms():
    """Drift 2(1-P)(1-x^2) and per-noise coefficient 2x(1-P) of the purity SDE."""
    p = purity_expr()
    return 2 * (1 - p) * (1 - X ** 2), 2 * X * (1 - p)


def parse_model(model, gamma=None):
    """Build a system from a model string such as "raising-lowering", "weighted:0.5" or "pure-theta"."""
    name, _, arg = model.partition(":")
    if arg:
        try:
            value = float(arg)
        except ValueError:
            raise ModelError("Bad parameter %s in model string %s" % (arg, model))
        if gamma is not None and float(gamma) != value:
            logger.warning("Model string %s overrides gamma=%g" % (model, float(gamma)))
        gamma = value
    gamma = 0.0 if gamma is None else gamma

    if name == "raising-lowering":
        return raising_lowering_sde()
    if name == "weighted":
        return weighted_sde(gamma)
    if name == "pure-z":
        return pure_state_sde(gamma)
    if name == "pure-theta":
        return theta_sde()
    if name == "multiplicative":
        return multiplicative_sde()
    raise ModelError("Unknown model %s" % model)


def model_family(model):
    return model.partition(":")[0]
