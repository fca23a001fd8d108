import logging
import math

import numpy as np
import sympy as sp
from scipy.integrate import quad

from .defaults import QUAD_REL_TOL, QUAD_LIMIT
from .errors import QuadratureError, ConfigError
from .lindblad import Z, THETA, X_POSITIVE
from .sde_system import compile_expr

logger = logging.getLogger(__name__)

QUAD_ABS_TOL = 1e-13


def integrate(label, f, a, b, epsrel=QUAD_REL_TOL, **kwargs):
    """scipy quad with convergence problems turned into QuadratureError carrying the error estimate."""
    result = quad(f, a, b, epsabs=QUAD_ABS_TOL, epsrel=epsrel, limit=QUAD_LIMIT, full_output=1, **kwargs)
    value, error = result[0], result[1]
    if len(result) > 3:
        raise QuadratureError(label, error, str(result[3]).strip())
    return value, error


class StationaryPdf:
    """Analytic stationary density p(x) = expr / normalization on [lower, upper].

    lower_exponent and upper_exponent describe integrable endpoint singularities of the
    form (x - lower)^a (upper - x)^b, and regular is expr with those factors taken out.
    Integrals that touch a singular end hand the factor to quad as an algebraic weight and
    integrate only the regular part, which is finite at the ends.
    """

    def __init__(self, label, expr, symbol, lower, upper, lower_exponent=0.0, upper_exponent=0.0,
                 underflow_to_zero=False, regular=None):
        self.label = label
        self.expr = expr
        self.symbol = symbol
        self.lower = float(lower)
        self.upper = float(upper)
        self.lower_exponent = lower_exponent
        self.upper_exponent = upper_exponent
        self.underflow_to_zero = underflow_to_zero
        self.regular = expr if regular is None else regular
        self._fn = None
        self._regular_fn = None
        self.normalization, self.normalization_error = self.integral(self.lower, self.upper)
        if not self.normalization > 0:
            raise QuadratureError(label, self.normalization_error, "non-positive normalization")
        logger.info("Normalized stationary pdf of %s: %.15g (error estimate %g)" % (
            label, self.normalization, self.normalization_error))

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_fn"] = None
        state["_regular_fn"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    def _evaluate(self, fn, x):
        x = np.asarray(x, dtype=float)
        value = fn(x[..., None])
        if self.underflow_to_zero:
            value = np.where(np.isnan(value), 0.0, value)
        return value

    def unnormalized(self, x):
        if self._fn is None:
            self._fn = compile_expr(self.expr, (self.symbol,))
        return self._evaluate(self._fn, x)

    def regular_part(self, x):
        if self._regular_fn is None:
            self._regular_fn = compile_expr(self.regular, (self.symbol,))
        return self._evaluate(self._regular_fn, x)

    def density(self, x):
        return self.unnormalized(x) / self.normalization

    def __call__(self, x):
        return self.density(x)

    def integral(self, a, b, moment=0):
        """Integral of x^moment times the unnormalized density over [a, b]."""
        alpha = self.lower_exponent if a == self.lower else 0.0
        beta = self.upper_exponent if b == self.upper else 0.0

        def g(x):
            value = float(self.regular_part(x)) * x ** moment
            # singular factors not carried by the weight are finite inside (a, b)
            if self.lower_exponent and not alpha:
                value *= (x - self.lower) ** self.lower_exponent
            if self.upper_exponent and not beta:
                value *= (self.upper - x) ** self.upper_exponent
            return value

        if alpha == 0.0 and beta == 0.0:
            return integrate(self.label, g, a, b)
        return integrate(self.label, g, a, b, weight="alg", wvar=(alpha, beta))

    def bin_probabilities(self, edges):
        edges = np.asarray(edges, dtype=float)
        if edges[0] < self.lower - 1e-12 or edges[-1] > self.upper + 1e-12:
            raise ConfigError("Bins [%g, %g] extend beyond the domain of %s" % (edges[0], edges[-1], self.label))
        return np.array([self.integral(max(a, self.lower), min(b, self.upper))[0]
                         for a, b in zip(edges[:-1], edges[1:])]) / self.normalization

    def mean(self):
        return self.integral(self.lower, self.upper, moment=1)[0] / self.normalization

    def __str__(self):
        return "<%s(%s on [%g, %g], norm=%g)>" % (self.__class__.__name__, self.label, self.lower, self.upper,
                                                  self.normalization)

    def __repr__(self):
        return str(self)


def stationary_pdf_z():
    """p(z) proportional to (1 - z^4)^(-1/2) (1 + z^2)^(-1), integrably singular at z = +-1."""
    regular = (1 + Z ** 2) ** sp.Rational(-3, 2)
    expr = (1 - Z ** 2) ** sp.Rational(-1, 2) * regular
    return StationaryPdf("z", expr, Z, -1.0, 1.0, lower_exponent=-0.5, upper_exponent=-0.5, regular=regular)


def stationary_pdf_theta():
    """p(theta) proportional to (1 + cos^2 theta)^(-3/2) on [0, pi]."""
    expr = (1 + sp.cos(THETA) ** 2) ** sp.Rational(-3, 2)
    return StationaryPdf("theta", expr, THETA, 0.0, math.pi)


def stationary_pdf_multiplicative():
    """p(x) = 4 pi^(-1/2) x^(-4) exp(-1/x^2) on (0, infinity), already normalized."""
    x = X_POSITIVE
    expr = 4 / sp.sqrt(sp.pi) * x ** -4 * sp.exp(-1 / x ** 2)
    return StationaryPdf("multiplicative", expr, x, 0.0, np.inf, underflow_to_zero=True)


def _limit_point(value):
    if np.isinf(value):
        return sp.oo if value > 0 else -sp.oo
    if value == math.pi:
        return sp.pi
    return sp.nsimplify(value)


def stationary_boundary_term(system, pdf):
    """[D p] evaluated analytically at the domain ends (upper minus lower) by symbolic limits."""
    if not system.is_one_dimensional:
        raise ConfigError("Boundary terms are defined for one-dimensional systems, not %s" % system.name)
    symbol = system.symbols[0]
    flux = system.diffusion_expr[0, 0] * pdf.expr.subs(pdf.symbol, symbol)
    at_upper = float(sp.limit(flux, symbol, _limit_point(pdf.upper), "-")) / pdf.normalization
    at_lower = float(sp.limit(flux, symbol, _limit_point(pdf.lower), "+")) / pdf.normalization
    value = at_upper - at_lower
    logger.info("Stationary [D p] of %s: %.12g at upper, %.12g at lower" % (system.name, at_upper, at_lower))
    return value


def stationary_drift_balance(pdf, drift):
    """Mean of a drift function under the stationary pdf, by quadrature."""
    value, _ = integrate(pdf.label, lambda x: float(drift(x)) * float(pdf.density(x)), pdf.lower, pdf.upper)
    return value
