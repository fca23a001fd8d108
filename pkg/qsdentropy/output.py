import logging
import sys
from contextlib import contextmanager

import numpy as np

from ._version import __version__
from .defaults import CSV_SCHEMA_VERSION, CSV_FLOAT_FORMAT, RNG_ALGORITHM
from .errors import ConfigError

logger = logging.getLogger(__name__)


class CsvMeta:
    """Key=value fields of the schema comment line that opens every output file."""

    def __init__(self, kind, model=None, frame=None, seed=None, dt=None, **extra):
        self.kind = kind
        self.fields = [("schema", CSV_SCHEMA_VERSION), ("version", __version__)]
        for key, value in [("model", model), ("frame", frame), ("seed", seed), ("dt", dt)]:
            if value is not None:
                self.fields.append((key, value))
        if seed is not None:
            self.fields.append(("rng", RNG_ALGORITHM))
        self.fields.extend(sorted(extra.items()))

    def line(self):
        return "# qsdentropy %s %s" % (self.kind, " ".join("%s=%s" % (k, _format_value(v)) for k, v in self.fields))

    def __str__(self):
        return "<%s(%s)>" % (self.__class__.__name__, self.line())

    def __repr__(self):
        return str(self)


def _format_value(value):
    if isinstance(value, float):
        return "%.17g" % value
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value).replace(" ", "_")


@contextmanager
def _open(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w") as handle:
            yield handle


def write_table(path, names, columns, meta):
    """Write columns (equal-length sequences) as CSV under the schema line and a header row."""
    columns = [np.asarray(c, dtype=float).reshape(-1) for c in columns]
    if len(names) != len(columns):
        raise ConfigError("%d column names for %d columns" % (len(names), len(columns)))
    lengths = set(len(c) for c in columns)
    if len(lengths) > 1:
        raise ConfigError("Columns differ in length: %s" % str(sorted(lengths)))
    data = np.column_stack(columns) if columns else np.zeros((0, 0))
    with _open(path) as handle:
        handle.write(meta.line() + "\n")
        np.savetxt(handle, data, fmt=CSV_FLOAT_FORMAT, delimiter=",", header=",".join(names), comments="")
    logger.info("Wrote %d rows of %s to %s" % (data.shape[0], meta.kind, path if path else "stdout"))


def read_table(path):
    """Schema fields, column names and data of a file written by write_table."""
    with open(path) as handle:
        first = handle.readline().strip()
        header = handle.readline().strip()
        if not first.startswith("# qsdentropy"):
            raise ConfigError("%s does not start with a qsdentropy schema line" % path)
        tokens = first.split()
        meta = {"kind": tokens[2]}
        meta.update(dict(token.split("=", 1) for token in tokens[3:]))
        if meta.get("schema") != CSV_SCHEMA_VERSION:
            raise ConfigError("%s has schema %s, expected %s" % (path, meta.get("schema"), CSV_SCHEMA_VERSION))
        names = header.split(",")
        data = np.loadtxt(handle, delimiter=",", ndmin=2)
    return meta, names, data


def write_trajectory(path, trajectory, meta):
    names = ["t"] + list(trajectory.labels)
    columns = [trajectory.times] + [trajectory.states[:, i] for i in range(len(trajectory.labels))]
    if tuple(trajectory.labels) == ("x", "y", "z"):
        r2 = np.sum(trajectory.states ** 2, axis=-1)
        names += ["r2", "purity"]
        columns += [r2, 0.5 * (1.0 + r2)]
    for name in ("ds_env", "ds_sys", "ds_tot"):
        value = getattr(trajectory, name)
        if value is not None:
            names.append(name)
            columns.append(value)
    write_table(path, names, columns, meta)


def write_ensemble(path, result, meta, reference=None):
    """Means and variances per coordinate, observables, entropy, optional reference column and traces.

    reference is a (name, values) pair on the ensemble's time grid.
    """
    names = ["t"]
    columns = [result.times]
    names += ["mean_%s" % label for label in result.labels]
    columns += [result.means[:, i] for i in range(len(result.labels))]
    names += ["var_%s" % label for label in result.labels]
    columns += [result.variances[:, i] for i in range(len(result.labels))]
    for k, name in enumerate(result.observable_names):
        names += ["mean_%s" % name, "var_%s" % name]
        columns += [result.observable_means[:, k], result.observable_variances[:, k]]
    if result.ds_env_mean is not None:
        names += ["mean_ds_env", "var_ds_env"]
        columns += [result.ds_env_mean, result.ds_env_variance]
    names.append("count")
    columns.append(result.counts)
    if reference is not None:
        names.append(reference[0])
        columns.append(reference[1])
    if result.traces is not None:
        for j in range(result.traces.shape[0]):
            for i, label in enumerate(result.labels):
                names.append("%s_%d" % (label, j))
                columns.append(result.traces[j, :, i])
    if result.ds_env_traces is not None:
        for j in range(result.ds_env_traces.shape[0]):
            names.append("ds_env_%d" % j)
            columns.append(result.ds_env_traces[j])
    write_table(path, names, columns, meta)


def write_histogram(path, edges, counts, density, analytic, meta):
    edges = np.asarray(edges, dtype=float)
    write_table(path, ["bin_left", "bin_right", "count", "density", "analytic"],
                [edges[:-1], edges[1:], counts, density, analytic], meta)


def write_stationary(path, label, coordinates, density, meta):
    write_table(path, [label, "density"], [coordinates, density], meta)


def write_fpe(path, label, snapshots, meta):
    """One column of densities per snapshot on the shared cell centers."""
    if not snapshots:
        raise ConfigError("No Fokker-Planck snapshots to write")
    names = [label, "width"] + ["p_t=%.6g" % pdf.time for pdf in snapshots]
    columns = [snapshots[0].centers, snapshots[0].widths] + [pdf.density for pdf in snapshots]
    write_table(path, names, columns, meta)


def write_entropy_records(path, records, meta):
    nan = float("nan")
    names = ["t", "gibbs", "gibbs_rate", "current_log_term", "gradient_term", "extreme_term", "mean_rate"]
    columns = [[r.time for r in records], [r.gibbs for r in records],
               [nan if r.gibbs_rate is None else r.gibbs_rate for r in records],
               [r.current_log_term for r in records], [r.gradient_term for r in records],
               [r.extreme_term for r in records],
               [nan if r.mean_rate is None else r.mean_rate for r in records]]
    write_table(path, names, columns, meta)


def write_report(stream, results):
    for result in results:
        stream.write(str(result).rstrip() + "\n")
    failed = sum(1 for r in results if not r.passed)
    stream.write("%d of %d checks passed\n" % (len(results) - failed, len(results)))
