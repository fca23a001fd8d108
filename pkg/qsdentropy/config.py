import logging
import math

import numpy as np

from .defaults import *
from .errors import ConfigError, UnphysicalStateError
from .lindblad import parse_model, model_family
from .reduction import reduce

logger = logging.getLogger(__name__)

FRAME_LABELS = {"xyz": ("x", "y", "z"), "xz": ("x", "z"), "z": ("z",), "theta": ("theta",), "x": ("x",)}
TRUE_STRINGS = ("1", "true", "yes", "on")
FALSE_STRINGS = ("0", "false", "no", "off")


def parse_point(text):
    """Coordinates from a comma- or space-separated string, e.g. "0.5,0.5,0.5"."""
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).replace(",", " ").split())
    except ValueError:
        raise ConfigError("Cannot read a point from %s" % text)


def load_config_file(path):
    """key=value lines; blank lines and # comments are skipped, keys may use dashes or underscores."""
    values = {}
    try:
        handle = open(path)
    except IOError as e:
        raise ConfigError("Cannot read config file %s: %s" % (path, str(e)))
    with handle:
        for number, raw in enumerate(handle, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("%s:%d: expected key=value, got %s" % (path, number, line))
            key, value = [part.strip() for part in line.split("=", 1)]
            key = key.lstrip("-").replace("-", "_")
            if value.lower() in TRUE_STRINGS + FALSE_STRINGS:
                value = value.lower() in TRUE_STRINGS
            values[key] = value
    logger.info("Read %d settings from %s" % (len(values), path))
    return values


class RunConfig:
    """Validated settings of one command, built from the parsed command line."""

    def __init__(self, command, model="raising-lowering", frame=None, gamma=GAMMA, dt=DT, steps=STEPS, seed=SEED,
                 ntraj=NTRAJ, init=None, out=None, stride=RECORD_STRIDE, workers=WORKERS, entropy=None,
                 system_entropy=False, traces=TRACES, level=None, **options):
        self.command = command
        self.model = model
        self.family = model_family(model)
        self.gamma = float(gamma) if gamma is not None else GAMMA
        parameter = model.partition(":")[2]
        if parameter:
            try:
                self.gamma = float(parameter)
            except ValueError:
                raise ConfigError("Bad parameter %s in model string %s" % (parameter, model))
        self.dt = float(dt)
        self.steps = int(steps)
        self.seed = int(seed)
        self.ntraj = int(ntraj)
        self.out = out
        self.stride = int(stride)
        self.workers = int(workers)
        self.system_entropy = bool(system_entropy)
        self.traces = int(traces)
        self.level = None if level is None else float(level)
        self.options = options

        if self.family not in MODELS:
            raise ConfigError("Unknown model %s; choose from %s" % (model, ", ".join(MODELS)))
        self.frame = frame or DEFAULT_FRAME[self.family]
        if self.frame not in MODEL_FRAMES[self.family]:
            raise ConfigError("Frame %s is not available for model %s (use %s)" % (
                self.frame, model, ", ".join(MODEL_FRAMES[self.family])))
        self.init = parse_point(init) if init is not None else DEFAULT_INIT[self.frame]
        self.entropy = entropy or self._default_entropy()
        self.validate()

    @classmethod
    def from_args(cls, args):
        values = dict(vars(args))
        values.pop("func", None)
        values.pop("config", None)
        values.pop("verbose", None)
        command = values.pop("command")
        return cls(command, **values)

    def _default_entropy(self):
        method = DEFAULT_ENTROPY[self.frame]
        if method == "closed-form-z" and self.gamma != 0.0:
            # the z closed form holds for equal operator weights only
            return "general"
        return method

    @property
    def labels(self):
        return FRAME_LABELS[self.frame]

    @property
    def is_one_dimensional(self):
        return len(self.labels) == 1

    def validate(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive, got %g" % self.dt)
        if self.steps < 1:
            raise ConfigError("steps must be at least 1, got %d" % self.steps)
        if self.ntraj < 1:
            raise ConfigError("ntraj must be at least 1, got %d" % self.ntraj)
        if self.stride < 1:
            raise ConfigError("stride must be at least 1, got %d" % self.stride)
        if self.workers < 1:
            raise ConfigError("workers must be at least 1, got %d" % self.workers)
        if self.traces < 0:
            raise ConfigError("traces must be non-negative, got %d" % self.traces)
        if len(self.init) != len(self.labels):
            raise ConfigError("Frame %s needs %d initial coordinates, got %s" % (self.frame, len(self.labels),
                                                                                 str(self.init)))
        self._check_domain()
        if self.entropy not in ENTROPY_METHODS:
            raise ConfigError("Unknown entropy method %s; choose from %s" % (self.entropy, ", ".join(ENTROPY_METHODS)))
        if self.entropy == "closed-form-z" and self.frame != "z":
            raise ConfigError("closed-form-z entropy needs the z frame, not %s" % self.frame)
        if self.entropy == "closed-form-theta" and self.frame != "theta":
            raise ConfigError("closed-form-theta entropy needs the theta frame, not %s" % self.frame)
        if self.entropy == "general" and self.frame == "xyz":
            raise ConfigError("The diffusion matrix of the xyz frame is singular; use --frame xz for entropy")
        if self.system_entropy and not self.is_one_dimensional:
            raise ConfigError("System entropy is computed for one-dimensional frames only, not %s" % self.frame)
        if self.option("project_invariants") and (self.family != "raising-lowering" or self.frame != "xyz"):
            raise ConfigError("Invariant projection needs the raising-lowering model in the xyz frame")

    def _check_domain(self):
        point = np.asarray(self.init, dtype=float)
        if not np.all(np.isfinite(point)):
            raise UnphysicalStateError(self.init, "non-finite coordinates")
        if self.frame == "xyz" and np.sum(point * point) > 1.0 + BLOCH_TOL:
            raise UnphysicalStateError(self.init, "|r|^2 exceeds 1")
        if self.frame == "xz":
            if np.sum(point * point) >= 1.0:
                raise UnphysicalStateError(self.init, "x^2 + z^2 must be below 1 off the pure-state circle")
            if self.level is not None and not self.level > 0:
                raise ConfigError("Invariant level must be positive, got %g" % self.level)
        if self.frame == "z" and abs(point[0]) > 1.0 + BLOCH_TOL:
            raise UnphysicalStateError(self.init, "|z| exceeds 1")
        if self.frame == "theta" and not -BLOCH_TOL <= point[0] <= math.pi + BLOCH_TOL:
            raise UnphysicalStateError(self.init, "theta outside [0, pi]")
        if self.frame == "x" and not point[0] > 0:
            raise UnphysicalStateError(self.init, "x must be positive")

    def full_initial(self):
        """Initial point in the model's own coordinates; the xz frame recovers y from the invariant level."""
        if self.frame != "xz":
            return self.init
        x, z = self.init
        level = self.level if self.level is not None else constant_level_default()
        y = math.sqrt((1.0 - x * x - z * z) / level)
        return (x, y, z)

    def build(self):
        """(system, reduction map or None, initial point in the frame's coordinates)."""
        system = parse_model(self.model, self.gamma)
        if self.frame == "xz":
            reduced, rmap = reduce(system, [1], initial=self.full_initial())
            return reduced, rmap, np.asarray(self.init, dtype=float)
        return system, None, np.asarray(self.init, dtype=float)

    def option(self, name, default=None):
        value = self.options.get(name)
        return default if value is None else value

    def invariant_map(self, system):
        """ReductionMap that puts xyz steps back on the level set of the initial point, or None."""
        if not self.option("project_invariants"):
            return None
        _, rmap = reduce(system, [1], initial=self.init)
        logger.info("Projecting every step onto f = %g" % rmap.levels[0])
        return rmap

    def __str__(self):
        return "<%s(%s, model=%s, frame=%s, dt=%g, steps=%d, seed=%d, init=%s)>" % (
            self.__class__.__name__, self.command, self.model, self.frame, self.dt, self.steps, self.seed,
            str(self.init))

    def __repr__(self):
        return str(self)


def constant_level_default():
    """Invariant level of the canonical starting point (0.5, 0.5, 0.5)."""
    x, y, z = DEFAULT_INIT["xyz"]
    return (1.0 - x * x - z * z) / (y * y)
