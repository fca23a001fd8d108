import logging
import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu
from scipy.special import exprel

from .defaults import P_FLOOR, FPE_CELLS, MULTIPLICATIVE_DOMAIN, BOUNDARY_EXTRAPOLATION_DECADE, FPE_BUMP_WIDTH
from .errors import ConfigError, CflError, NumericalError

logger = logging.getLogger(__name__)

MASS_TOL = 1e-9


class Pdf1DGrid:
    """Cell-averaged probability density on a one-dimensional grid of cells."""

    def __init__(self, edges, density, time=0.0):
        self.edges = np.asarray(edges, dtype=float)
        self.density = np.asarray(density, dtype=float)
        self.time = float(time)
        if self.density.shape != (len(self.edges) - 1,):
            raise ConfigError("%d densities for %d cells" % (len(self.density), len(self.edges) - 1))
        if np.any(np.diff(self.edges) <= 0):
            raise ConfigError("Grid edges must be strictly increasing")
        if np.any(self.density < 0):
            raise NumericalError("Negative probability density at t=%g" % self.time)

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def masses(self):
        return self.density * self.widths

    def mass(self):
        return float(np.sum(self.masses))

    def check_mass(self, tol=MASS_TOL):
        if abs(self.mass() - 1.0) > tol:
            raise NumericalError("Probability mass %.15g differs from 1 by more than %g" % (self.mass(), tol))
        return True

    def density_at(self, x):
        return float(np.interp(x, self.centers, self.density))

    def same_geometry(self, other):
        return self.edges.shape == other.edges.shape and np.array_equal(self.edges, other.edges)

    def l1_distance(self, other):
        if not self.same_geometry(other):
            raise ConfigError("Grids differ in geometry")
        return float(np.sum(np.abs(self.density - other.density) * self.widths))

    @classmethod
    def normalized(cls, edges, density, time=0.0):
        edges = np.asarray(edges, dtype=float)
        density = np.asarray(density, dtype=float)
        total = np.sum(density * np.diff(edges))
        if not total > 0:
            raise NumericalError("Cannot normalize a density with total mass %g" % total)
        return cls(edges, density / total, time)

    @classmethod
    def uniform(cls, edges):
        edges = np.asarray(edges, dtype=float)
        return cls.normalized(edges, np.ones(len(edges) - 1))

    @classmethod
    def bump(cls, edges, center, width=FPE_BUMP_WIDTH):
        edges = np.asarray(edges, dtype=float)
        centers = 0.5 * (edges[1:] + edges[:-1])
        return cls.normalized(edges, np.exp(-0.5 * ((centers - center) / width) ** 2))

    @classmethod
    def from_function(cls, edges, f):
        edges = np.asarray(edges, dtype=float)
        centers = 0.5 * (edges[1:] + edges[:-1])
        return cls.normalized(edges, np.asarray(f(centers), dtype=float))

    def __str__(self):
        return "<%s(%d cells on [%g, %g], t=%g)>" % (self.__class__.__name__, len(self.density), self.edges[0],
                                                     self.edges[-1], self.time)

    def __repr__(self):
        return str(self)


def uniform_edges(lower, upper, cells):
    return np.linspace(lower, upper, cells + 1)


def geometric_edges(lower, upper, cells):
    return np.geomspace(lower, upper, cells + 1)


def default_edges(system, cells=FPE_CELLS):
    """Uniform cells on a finite domain; a geometric grid on the truncated half line otherwise."""
    domain = system.domain
    if domain.kind in ("clamp", "reflect") and np.isfinite(domain.lower) and np.isfinite(domain.upper):
        return uniform_edges(domain.lower, domain.upper, cells)
    if domain.kind == "reflect" and domain.lower == 0.0 and np.isinf(domain.upper):
        return geometric_edges(MULTIPLICATIVE_DOMAIN[0], MULTIPLICATIVE_DOMAIN[1], cells)
    raise ConfigError("No default grid for the domain %s of %s" % (str(domain), system.name))


def _bernoulli(s):
    """B(s) = s / (e^s - 1)."""
    with np.errstate(over="ignore"):
        return 1.0 / exprel(s)


class FokkerPlanckOperator:
    """Conservative finite-volume generator of dp/dt = -dJ/dx, J = A p - d(D p)/dx, with no-flux ends.

    Interior fluxes use the exponentially fitted (Scharfetter-Gummel) form in q = D p with the
    velocity v = A / D frozen on each face, which keeps the scheme positive and makes the
    discrete stationary state exact for zero current.
    """

    def __init__(self, system, edges):
        if not system.is_one_dimensional:
            raise ConfigError("The Fokker-Planck solver handles one-dimensional systems, not %s" % system.name)
        self.system = system
        self.edges = np.asarray(edges, dtype=float)
        centers = 0.5 * (self.edges[1:] + self.edges[:-1])
        self.centers = centers
        self.widths = np.diff(self.edges)
        faces = self.edges[1:-1]
        self.spacing = np.diff(centers)
        self.D_centers = system.diffusion(centers[:, None])[:, 0, 0]
        if np.any(self.D_centers <= 0):
            raise NumericalError("Diffusion coefficient vanishes inside the grid of %s" % system.name)
        A_faces = system.drift(faces[:, None])[:, 0]
        D_faces = system.diffusion(faces[:, None])[:, 0, 0]
        self.velocity = A_faces / D_faces
        s = self.velocity * self.spacing
        self.forward = _bernoulli(-s) / self.spacing
        self.backward = _bernoulli(s) / self.spacing
        self.matrix = self._assemble()

    def _assemble(self):
        n = len(self.centers)
        # J_f = forward_f q_i - backward_f q_{i+1} across face f between cells i and i+1
        out_right = self.forward * self.D_centers[:-1]
        in_from_right = self.backward * self.D_centers[1:]
        diag = np.zeros(n)
        diag[:-1] -= out_right
        diag[1:] -= in_from_right
        upper = in_from_right
        lower = out_right
        L = sparse.diags([lower, diag, upper], [-1, 0, 1], shape=(n, n), format="csc")
        return sparse.diags(1.0 / self.widths).dot(L).tocsc()

    def flux(self, pdf):
        q = self.D_centers * pdf.density
        return self.forward * q[:-1] - self.backward * q[1:]

    def stability_limit(self):
        return 1.0 / np.max(np.abs(self.matrix.diagonal()))

    def stationary(self):
        """Zero-current discrete state: ln q_(i+1) = ln q_i + v h across every face."""
        log_q = np.concatenate([[0.0], np.cumsum(self.velocity * self.spacing)])
        log_p = log_q - np.log(self.D_centers)
        p = np.exp(log_p - np.max(log_p))
        return Pdf1DGrid.normalized(self.edges, p, time=np.inf)

    def evolve(self, initial, dt, t_end, scheme="implicit", record_every=None):
        """Advance initial to t_end; returns the final grid and the list of recorded grids."""
        if initial.edges.shape != self.edges.shape or not np.array_equal(initial.edges, self.edges):
            raise ConfigError("Initial pdf is not on the operator's grid")
        if not dt > 0:
            raise ConfigError("dt must be positive, got %g" % dt)
        n_steps = int(round((t_end - initial.time) / dt))
        if n_steps < 0:
            raise ConfigError("t_end %g is before the initial time %g" % (t_end, initial.time))
        if scheme == "explicit":
            limit = self.stability_limit()
            if dt > limit:
                raise CflError(dt, limit)
            propagate = lambda p: p + dt * self.matrix.dot(p)
        elif scheme == "implicit":
            lu = splu((sparse.identity(len(self.centers), format="csc") - dt * self.matrix).tocsc())
            propagate = lu.solve
        else:
            raise ConfigError("Unknown scheme %s" % scheme)

        p = initial.density.copy()
        time = initial.time
        series = [initial]
        for k in range(1, n_steps + 1):
            p = np.maximum(propagate(p), 0.0)
            time = initial.time + k * dt
            if record_every and k % record_every == 0:
                series.append(Pdf1DGrid(self.edges, p, time))
        final = Pdf1DGrid(self.edges, p, time)
        drift = abs(final.mass() - initial.mass())
        if drift > MASS_TOL * max(1.0, t_end - initial.time):
            logger.warning("Probability mass drifted by %g over [%g, %g]" % (drift, initial.time, time))
        return final, series


def fpe_solve_1d(system, initial, dt, t_end, scheme="implicit"):
    operator = FokkerPlanckOperator(system, initial.edges)
    final, _ = operator.evolve(initial, dt, t_end, scheme=scheme)
    return final


def fpe_series(system, initial, dt, n_steps, record_every=1, scheme="implicit"):
    """Grids at initial.time + k dt for every record_every-th step up to n_steps."""
    operator = FokkerPlanckOperator(system, initial.edges)
    _, series = operator.evolve(initial, dt, initial.time + n_steps * dt, scheme=scheme, record_every=record_every)
    return series


def fpe_stationary_1d(system, edges):
    return FokkerPlanckOperator(system, edges).stationary()


def stationary_mean(system, cells=FPE_CELLS):
    pdf = fpe_stationary_1d(system, default_edges(system, cells))
    return float(np.sum(pdf.centers * pdf.masses))


def _extrapolate_linear(x, y, target):
    return y[0] + (target - x[0]) * (y[1] - y[0]) / (x[1] - x[0])


def _extrapolate_to_infinity(centers, values):
    """Quadratic fit in 1/x over the last decade of the grid, evaluated at 1/x = 0."""
    upper = centers[-1]
    select = centers >= upper / BOUNDARY_EXTRAPOLATION_DECADE
    if np.sum(select) < 3:
        raise NumericalError("Too few cells in the last decade to extrapolate")
    coefficients = np.polyfit(1.0 / centers[select], values[select], 2)
    return float(np.polyval(coefficients, 0.0))


def boundary_term_mean(system, pdf):
    """[D p] at the domain ends, upper minus lower, extrapolated from cell values of D p.

    A truncated half-line domain is extrapolated to infinity.
    """
    q = system.diffusion(pdf.centers[:, None])[:, 0, 0] * pdf.density
    c = pdf.centers
    at_lower = _extrapolate_linear(c[:2], q[:2], pdf.edges[0])
    if np.isinf(system.domain.upper) and system.domain.kind != "none":
        at_upper = _extrapolate_to_infinity(c, q)
    else:
        at_upper = _extrapolate_linear(c[-2:][::-1], q[-2:][::-1], pdf.edges[-1])
    logger.debug("[D p] of %s: %g at upper, %g at lower" % (system.name, at_upper, at_lower))
    return at_upper - at_lower


def _density_gradient(pdf):
    return np.gradient(pdf.density, pdf.centers)


def boundary_gradient_term(system, pdf):
    """[D dp/dx] at the outermost cells, upper minus lower; diverges under refinement when D dp/dx is singular."""
    D = system.diffusion(pdf.centers[:, None])[:, 0, 0]
    c = pdf.centers
    p = pdf.density
    lower = D[0] * (p[1] - p[0]) / (c[1] - c[0])
    upper = D[-1] * (p[-1] - p[-2]) / (c[-1] - c[-2])
    return upper - lower


class SystemEntropyRecord:
    def __init__(self, time, gibbs, current_log_term, gradient_term, extreme_term):
        self.time = time
        self.gibbs = gibbs
        self.current_log_term = current_log_term
        self.gradient_term = gradient_term
        self.extreme_term = extreme_term
        self.gibbs_rate = None
        self.mean_rate = None

    def __str__(self):
        return "<%s(t=%g, S_G=%g, [J ln p]=%g, [D dp/dx]=%g, [B^2 P]/2=%g)>" % (
            self.__class__.__name__, self.time, self.gibbs, self.current_log_term, self.gradient_term,
            self.extreme_term)

    def __repr__(self):
        return str(self)


def gibbs_entropy(pdf):
    return float(-np.sum(pdf.masses * np.log(np.maximum(pdf.density, P_FLOOR))))


def ds_sys_mean(series, system):
    """Gibbs entropy and the three boundary terms of the mean system entropy for each grid in series.

    mean_rate of record k is dS_G/dt - [J ln p] - [D dp/dx] - [B^2 P]/2 with dS_G/dt from
    the difference to record k - 1; the first record has no rate. [J ln p] takes J from the
    two outermost interior faces and ln p from the two outermost cells, both extrapolated
    linearly to the domain ends.
    """
    if not series:
        return []
    operator = FokkerPlanckOperator(system, series[0].edges)
    records = []
    for pdf in series:
        if not pdf.same_geometry(series[0]):
            raise ConfigError("All grids of a series must share their geometry")
        valid = pdf.density > P_FLOOR
        log_p = np.log(np.maximum(pdf.density, P_FLOOR))
        J = operator.flux(pdf)
        faces = pdf.edges[1:-1]
        c = pdf.centers
        current_log = 0.0
        if len(J) > 1:
            if valid[-1] and valid[-2]:
                current_log += _extrapolate_linear(faces[::-1], J[::-1], pdf.edges[-1]) * \
                    _extrapolate_linear(c[::-1], log_p[::-1], pdf.edges[-1])
            if valid[0] and valid[1]:
                current_log -= _extrapolate_linear(faces, J, pdf.edges[0]) * \
                    _extrapolate_linear(c, log_p, pdf.edges[0])
        gradient = boundary_gradient_term(system, pdf)
        D = operator.D_centers
        slope = np.abs(_density_gradient(pdf))
        masked = np.where(valid, pdf.density, np.inf)
        low = int(np.argmin(masked))
        high = int(np.argmax(pdf.density))
        extreme = D[low] * slope[low] - D[high] * slope[high]
        records.append(SystemEntropyRecord(pdf.time, gibbs_entropy(pdf), current_log, gradient, extreme))

    for previous, record in zip(records[:-1], records[1:]):
        span = record.time - previous.time
        if span > 0 and math.isfinite(span):
            record.gibbs_rate = (record.gibbs - previous.gibbs) / span
            record.mean_rate = record.gibbs_rate - record.current_log_term - record.gradient_term \
                - record.extreme_term
    return records
