"""Spacings, k-th order non-overlapping spacing ratios, and summaries.

The k-th order ratio of a sorted spectrum compares two adjacent blocks of k
spacings that share no eigenvalue:

    r_i = (E[i+2k] - E[i+k]) / (E[i+k] - E[i]),   i = 1 .. n - 2k.

Ratios are invariant under shifting and rescaling the spectrum, which is why
no unfolding step appears anywhere in this package.
"""

import csv
import dataclasses
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ensembles import EnsembleSpec, Spectrum
from .errors import (
    BadEdgesError,
    DegenerateSpacingError,
    DomainError,
    InsufficientLevelsError,
    TooFewLevelsError,
)

__all__ = [
    "SeriesSource",
    "RatioSeries",
    "Binning",
    "Histogram",
    "Ecdf",
    "spacings",
    "kth_order_ratios",
    "ratios_from_level_rows",
    "bulk_filter",
    "histogram",
    "log_edges",
    "ecdf",
    "save_ratios_csv",
    "load_ratios_csv",
    "save_histogram_csv",
]


@dataclass(frozen=True)
class SeriesSource:
    """Provenance of a pooled ratio series."""

    spec_digest: str
    bulk_fraction: float
    trials: int


@dataclass(frozen=True, eq=False)
class RatioSeries:
    """Flat collection of k-th order ratios pooled across realizations."""

    k: int
    values: np.ndarray
    source: SeriesSource

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"k must be an integer >= 1, got {self.k}")
        if vals.size and (not np.all(np.isfinite(vals)) or np.any(vals <= 0)):
            raise DomainError("ratio values must be finite and positive")

    def __len__(self):
        return self.values.size


class Binning(Enum):
    LINEAR_ON_R = "linear"
    LOG_ON_R = "log"


@dataclass(frozen=True, eq=False)
class Histogram:
    """Counts over strictly increasing edges; out-of-range values excluded."""

    edges: np.ndarray
    counts: np.ndarray
    total: int
    binning: Binning

    def __post_init__(self):
        if np.any(np.diff(self.edges) <= 0):
            raise BadEdgesError("edges must be strictly increasing")
        if self.counts.sum() > self.total:
            raise DomainError("bin counts exceed the total sample count")

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def densities(self) -> np.ndarray:
        # normalized against the full sample, so out-of-range mass is visible
        if self.total == 0:
            return np.zeros_like(self.widths)
        return self.counts / (self.total * self.widths)


@dataclass(frozen=True, eq=False)
class Ecdf:
    """Right-continuous empirical CDF; reaches 1 at the largest sample."""

    sorted_values: np.ndarray

    def __call__(self, q):
        n = self.sorted_values.size
        return np.searchsorted(self.sorted_values, q, side="right") / n


def spacings(spectrum: Spectrum) -> np.ndarray:
    """Nearest-neighbour level spacings ``s_i = E[i+1] - E[i]``, length n-1."""
    return np.diff(spectrum.eigenvalues)


def kth_order_ratios(spectrum: Spectrum, k: int) -> RatioSeries:
    """Non-overlapping k-th order spacing ratios of one spectrum.

    Raises
    ------
    InsufficientLevelsError
        If the spectrum has fewer than 2k + 1 levels.
    DegenerateSpacingError
        If any block spacing entering a ratio is exactly zero.
    """
    if int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k}")
    n = spectrum.n
    if n < 2 * k + 1:
        raise InsufficientLevelsError(
            f"need at least {2 * k + 1} levels for order {k}, got {n}"
        )
    e = spectrum.eigenvalues
    num = e[2 * k :] - e[k:-k]
    den = e[k:-k] - e[: -2 * k]
    if np.any(den == 0) or np.any(num == 0):
        raise DegenerateSpacingError("zero block spacing; realization unusable")
    source = SeriesSource(spectrum.spec.digest(), bulk_fraction=1.0, trials=1)
    return RatioSeries(int(k), num / den, source)


def ratios_from_level_rows(rows: np.ndarray, k: int):
    """Pooled k-th order ratios from a stack of sorted level rows.

    Realizations containing a degenerate (exactly zero) block spacing are
    dropped whole rather than perturbed, so tails stay unbiased.  Returns
    ``(values, discarded)`` with values pooled in row order.
    """
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[1]
    if n < 2 * k + 1:
        raise InsufficientLevelsError(
            f"need at least {2 * k + 1} levels for order {k}, got {n}"
        )
    num = rows[:, 2 * k :] - rows[:, k:-k]
    den = rows[:, k:-k] - rows[:, : -2 * k]
    bad = np.any(num == 0, axis=1) | np.any(den == 0, axis=1)
    good = ~bad
    values = (num[good] / den[good]).ravel()
    return values, int(bad.sum())


def bulk_filter(spectrum: Spectrum, fraction: float) -> Spectrum:
    """Keep the central ``ceil(fraction * n)`` eigenvalues.

    The trim is symmetric; when an odd number of levels must go, the extra
    one is dropped from the bottom (so the kept window is [4, 8] for ten
    levels at fraction 0.5, in 1-based indexing).
    """
    if not 0 < fraction <= 1:
        raise DomainError(f"fraction must lie in (0, 1], got {fraction}")
    n = spectrum.n
    keep = math.ceil(fraction * n)
    if keep < 2:
        raise TooFewLevelsError(f"bulk filter would keep {keep} < 2 levels")
    drop = n - keep
    lo = (drop + 1) // 2
    kept = spectrum.eigenvalues[lo : lo + keep]
    spec = dataclasses.replace(spectrum.spec, n=keep)
    return Spectrum(kept, spec, spectrum.seed_tag)


def log_edges(lo: float, hi: float, nbins: int) -> np.ndarray:
    """Logarithmically spaced bin edges on [lo, hi]."""
    if not 0 < lo < hi:
        raise BadEdgesError(f"need 0 < lo < hi, got [{lo}, {hi}]")
    return np.geomspace(lo, hi, nbins + 1)


def histogram(series: RatioSeries, edges, binning: Binning = Binning.LINEAR_ON_R) -> Histogram:
    """Bin the series over the given edges; out-of-range values are excluded
    from the counts but remain in ``total``."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise BadEdgesError("edges must be a strictly increasing 1-D array")
    counts, _ = np.histogram(series.values, bins=edges)
    return Histogram(edges, counts, total=len(series), binning=binning)


def ecdf(series: RatioSeries) -> Ecdf:
    """Empirical CDF of the series."""
    return Ecdf(np.sort(series.values))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_ratios_csv(path, series: RatioSeries, meta: str | None = None) -> None:
    """Write the series as CSV rows ``k, value``."""
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write(f"# {meta}\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "value"])
        for v in series.values:
            writer.writerow([series.k, format(v, ".17g")])


def load_ratios_csv(path, source: SeriesSource | None = None) -> RatioSeries:
    """Read a ratio series CSV written by :func:`save_ratios_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        while header and header[0].startswith("#"):
            header = next(reader)
        if header != ["k", "value"]:
            raise DomainError(f"unrecognized ratio CSV header in {path}")
        ks, vals = [], []
        for row in reader:
            ks.append(int(row[0]))
            vals.append(float(row[1]))
    if not vals:
        raise DomainError(f"no ratio rows in {path}")
    if len(set(ks)) != 1:
        raise DomainError("mixed ratio orders in one CSV")
    if source is None:
        source = SeriesSource(f"csv:{path}", bulk_fraction=float("nan"), trials=0)
    return RatioSeries(ks[0], np.asarray(vals), source)


def save_histogram_csv(path, hist: Histogram, meta: str | None = None) -> None:
    """Write ``bin_lo, bin_hi, count, density`` rows."""
    dens = hist.densities
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write(f"# {meta}\n")
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count", "density"])
        for i in range(hist.counts.size):
            writer.writerow(
                [
                    format(hist.edges[i], ".17g"),
                    format(hist.edges[i + 1], ".17g"),
                    int(hist.counts[i]),
                    format(dens[i], ".17g"),
                ]
            )
