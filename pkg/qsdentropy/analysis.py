import logging

import numpy as np
from scipy import stats

from .defaults import HIST_BIN_WIDTH, HIST_EXCLUDE_FRACTION, HIST_MIN_EXPECTED, HIST_THIN, CHI2_ALPHA
from .errors import ConfigError

logger = logging.getLogger(__name__)


class GoodnessOfFit:
    """Outcome of a statistical test; passed(alpha) is True when the null hypothesis survives."""

    def __init__(self, name, statistic, p_value, dof=None, n_samples=None, n_bins=None):
        self.name = name
        self.statistic = float(statistic)
        self.p_value = float(p_value)
        self.dof = dof
        self.n_samples = n_samples
        self.n_bins = n_bins

    def passed(self, alpha=CHI2_ALPHA):
        return self.p_value >= alpha

    def __str__(self):
        return "<%s(%s, statistic=%g, p=%g, dof=%s, n=%s)>" % (self.__class__.__name__, self.name, self.statistic,
                                                              self.p_value, str(self.dof), str(self.n_samples))

    def __repr__(self):
        return str(self)


def histogram_edges(lower, upper, bin_width=HIST_BIN_WIDTH):
    """Edges of equal bins of width bin_width covering [lower, upper]; the last bin may be narrower."""
    if not bin_width > 0:
        raise ConfigError("Bin width must be positive, got %g" % bin_width)
    if not upper > lower:
        raise ConfigError("Empty histogram range [%g, %g]" % (lower, upper))
    n_bins = int(np.ceil((upper - lower) / bin_width - 1e-9))
    edges = lower + bin_width * np.arange(n_bins + 1)
    edges[-1] = upper
    return edges


def histogram(samples, edges):
    """Counts and normalized densities of samples on the given edges."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    counts, _ = np.histogram(samples, bins=edges)
    total = max(len(samples), 1)
    density = counts / (total * np.diff(edges))
    return counts, density


def interior_edges(pdf, bin_width=HIST_BIN_WIDTH, exclude_fraction=HIST_EXCLUDE_FRACTION):
    span = pdf.upper - pdf.lower
    if not np.isfinite(span):
        raise ConfigError("Interior bins need a finite domain, %s has [%g, %g]" % (pdf.label, pdf.lower, pdf.upper))
    if not 0 <= exclude_fraction < 0.5:
        raise ConfigError("Excluded fraction must lie in [0, 0.5), got %g" % exclude_fraction)
    return histogram_edges(pdf.lower + exclude_fraction * span, pdf.upper - exclude_fraction * span, bin_width)


def histogram_chi_square(samples, pdf, bin_width=HIST_BIN_WIDTH, exclude_fraction=HIST_EXCLUDE_FRACTION,
                         min_expected=HIST_MIN_EXPECTED, thin=HIST_THIN, edges=None):
    """Chi-square goodness of fit of samples against a StationaryPdf on interior bins.

    The outer exclude_fraction of the domain is left out at each end and the samples are
    thinned by thin to weaken serial correlation along a trajectory. Expected counts come
    from bin probabilities by quadrature, rescaled to the number of interior samples;
    bins expecting fewer than min_expected samples are dropped.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)[::max(1, int(thin))]
    if edges is None:
        edges = interior_edges(pdf, bin_width, exclude_fraction)
    edges = np.asarray(edges, dtype=float)
    observed, _ = np.histogram(samples, bins=edges)
    probabilities = pdf.bin_probabilities(edges)
    n_inside = observed.sum()
    if n_inside == 0:
        raise ConfigError("No samples fall inside [%g, %g]" % (edges[0], edges[-1]))
    expected = n_inside * probabilities / probabilities.sum()
    keep = expected >= min_expected
    if np.sum(keep) < 2:
        raise ConfigError("Only %d bins expect at least %g samples; use more samples or wider bins" % (
            np.sum(keep), min_expected))
    observed = observed[keep]
    expected = expected[keep] * observed.sum() / expected[keep].sum()
    statistic, p_value = stats.chisquare(observed, expected)
    result = GoodnessOfFit("chi-square %s" % pdf.label, statistic, p_value, dof=len(observed) - 1,
                           n_samples=int(observed.sum()), n_bins=len(observed))
    logger.info("Histogram fit against %s: %s (%d of %d bins kept)" % (pdf.label, str(result), len(observed),
                                                                       len(keep)))
    return result


def ks_two_sample(a, b):
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    a = a[np.isfinite(a)]
    b = b[np.isfinite(b)]
    if len(a) == 0 or len(b) == 0:
        raise ConfigError("Two-sample KS test needs finite samples in both sets (%d, %d)" % (len(a), len(b)))
    statistic, p_value = stats.ks_2samp(a, b)
    return GoodnessOfFit("ks-2samp", statistic, p_value, n_samples=(len(a), len(b)))


def standard_error(samples):
    samples = np.asarray(samples, dtype=float).reshape(-1)
    samples = samples[np.isfinite(samples)]
    if len(samples) < 2:
        return np.inf
    return float(np.std(samples, ddof=1) / np.sqrt(len(samples)))


def within_standard_errors(estimate, expected, error, k=3.0):
    return bool(abs(estimate - expected) <= k * error)


def moving_average(series, window):
    series = np.asarray(series, dtype=float)
    window = int(window)
    if window < 1 or window > len(series):
        raise ConfigError("Window %d does not fit a series of length %d" % (window, len(series)))
    return np.convolve(series, np.ones(window) / window, mode="valid")


def is_nondecreasing_trend(series, window, tol=0.0):
    """True when the moving average of series over window never drops by more than tol."""
    smoothed = moving_average(series, window)
    return bool(np.all(np.diff(smoothed) >= -tol))
