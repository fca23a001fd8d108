import logging
import math

import numpy as np

from .defaults import BLOCH_TOL, IMAG_TOL
from .errors import UnphysicalStateError, PureStateManifoldError

logger = logging.getLogger(__name__)

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)


class BlochVector:
    """Real coherence vector (x, y, z) of a two-level density matrix."""

    __slots__ = ("x", "y", "z")

    def __init__(self, x, y, z):
        self.x = float(x)
        self.y = float(y)
        self.z = float(z)

    @classmethod
    def from_any(cls, r):
        if isinstance(r, cls):
            return r
        x, y, z = np.asarray(r, dtype=float).reshape(3)
        return cls(x, y, z)

    def as_array(self):
        return np.array([self.x, self.y, self.z])

    def norm2(self):
        return self.x * self.x + self.y * self.y + self.z * self.z

    def is_physical(self, tol=BLOCH_TOL):
        return self.norm2() <= 1.0 + tol

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def __eq__(self, other):
        return isinstance(other, BlochVector) and tuple(self) == tuple(other)

    def __hash__(self):
        return hash(tuple(self))

    def __str__(self):
        return "<%s(%g, %g, %g)>" % (self.__class__.__name__, self.x, self.y, self.z)

    def __repr__(self):
        return str(self)


class PureAngle(float):
    """Polar angle on the pure-state circle, restricted to [0, pi]."""

    def __new__(cls, theta, tol=BLOCH_TOL):
        theta = float(theta)
        if not (-tol <= theta <= math.pi + tol):
            raise UnphysicalStateError(theta, "angle outside [0, pi]")
        return float.__new__(cls, min(max(theta, 0.0), math.pi))

    def __repr__(self):
        return "<%s(%g)>" % (self.__class__.__name__, float(self))


def _checked(r, tol=BLOCH_TOL):
    r = BlochVector.from_any(r)
    if not np.all(np.isfinite(r.as_array())):
        raise UnphysicalStateError(r, "non-finite coordinates")
    if not r.is_physical(tol):
        raise UnphysicalStateError(r, "|r|^2 = %.12g exceeds 1" % r.norm2())
    return r


def bloch_to_rho(r, tol=BLOCH_TOL):
    r = _checked(r, tol)
    return 0.5 * (IDENTITY + r.x * SIGMA_X + r.y * SIGMA_Y + r.z * SIGMA_Z)


def rho_to_bloch(rho, tol=BLOCH_TOL):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise UnphysicalStateError(rho, "density matrix must be 2x2")
    if not np.allclose(rho, rho.conj().T, atol=IMAG_TOL):
        raise UnphysicalStateError(rho, "density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise UnphysicalStateError(rho, "trace %s differs from 1" % str(np.trace(rho)))
    components = [np.trace(np.dot(rho, sigma)).real for sigma in PAULI]
    return _checked(components, tol)


def purity(r):
    r = _checked(r)
    return 0.5 * (1.0 + r.norm2())


def purity_from_rho(rho):
    rho = np.asarray(rho, dtype=complex)
    return float(np.trace(np.dot(rho, rho)).real)


def constant_of_motion(r):
    r = BlochVector.from_any(r)
    if r.y == 0.0:
        raise PureStateManifoldError(r)
    return (1.0 - r.x * r.x - r.z * r.z) / (r.y * r.y)


def project_to_ball(r):
    """Pull states that overshoot the unit sphere back onto it; interior states are untouched."""
    arr = np.array(r, dtype=float)
    norm = np.sqrt(np.sum(arr * arr, axis=-1, keepdims=True))
    scale = np.where(norm > 1.0, 1.0 / np.where(norm > 0.0, norm, 1.0), 1.0)
    return arr * scale


def z_to_theta(z, tol=BLOCH_TOL):
    z = float(z)
    if abs(z) > 1.0 + tol:
        raise UnphysicalStateError(z, "|z| exceeds 1")
    return PureAngle(math.acos(min(max(z, -1.0), 1.0)))


def theta_to_z(theta):
    return math.cos(PureAngle(theta))
