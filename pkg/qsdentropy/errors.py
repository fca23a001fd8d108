class QsdError(Exception):
    pass


class ConfigError(QsdError, ValueError):
    pass


class UnphysicalStateError(ConfigError):
    def __init__(self, state, reason):
        self.state = state
        self.reason = reason
        ConfigError.__init__(self, reason)

    def __str__(self):
        return "Unphysical state %s: %s" % (str(self.state), self.reason)


class PureStateManifoldError(ConfigError):
    def __init__(self, state):
        self.state = state
        ConfigError.__init__(self, state)

    def __str__(self):
        return "State %s lies on the pure-state manifold (y = 0); use the one-dimensional description" % str(
            self.state)


class ModelError(ConfigError):
    pass


class NumericalError(QsdError, ArithmeticError):
    pass


class NonFiniteStateError(NumericalError):
    def __init__(self, state, step=None):
        self.state = state
        self.step = step
        NumericalError.__init__(self, state)

    def __str__(self):
        return "Non-finite state %s at step %s" % (str(self.state), str(self.step))


class SingularDiffusionError(NumericalError):
    def __init__(self, state, det=None, system=None):
        self.state = state
        self.det = det
        self.system = system
        NumericalError.__init__(self, state)

    def __str__(self):
        where = "" if self.system is None else " of %s" % self.system
        return "Singular diffusion matrix%s at %s (det=%s)" % (where, str(self.state), str(self.det))


class SingularityError(NumericalError):
    def __init__(self, state, eps):
        self.state = state
        self.eps = eps
        NumericalError.__init__(self, state)

    def __str__(self):
        return "State %s within %g of a singular boundary" % (str(self.state), self.eps)


class ReductionError(NumericalError):
    pass


class QuadratureError(NumericalError):
    def __init__(self, label, estimate, message=""):
        self.label = label
        self.estimate = estimate
        self.message = message
        NumericalError.__init__(self, label)

    def __str__(self):
        return "Quadrature for %s did not converge (error estimate %g) %s" % (self.label, self.estimate,
                                                                               self.message)


class CflError(NumericalError):
    def __init__(self, dt, limit):
        self.dt = dt
        self.limit = limit
        NumericalError.__init__(self, dt)

    def __str__(self):
        return "Time step %g exceeds the explicit stability limit %g" % (self.dt, self.limit)


class AmbiguousRankWarning(UserWarning):
    pass
