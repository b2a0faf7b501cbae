"""Statistical verification of the higher-order ratio scaling law.

Pipeline: sample spectra -> bulk-filter -> pool k-th order ratios -> fit the
effective index by maximum likelihood, regress both tail exponents, test the
r <-> 1/r duality, and measure goodness of fit against the predicted
reference density.  The outcome is a :class:`FitReport` comparing the fitted
index against the scaling prediction k(k+1)/2 * beta + (k-1) and the
measured tail slopes against the exact exponents (index, -2 - index).

Trials are partitioned into fixed-size chunks keyed by trial index, so a run
is bit-for-bit reproducible for a given seed no matter how many workers
execute it or in which order chunks complete.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import ks_2samp

from . import __version__
from .ensembles import CHUNK_TRIALS, EnsembleSpec, MatrixModel, sample_eigenvalue_block
from .errors import (
    DomainError,
    EmptySeriesError,
    InsufficientTailSamplesError,
    OptimizerNonconvergenceError,
)
from .models import (
    beta_prime,
    log_normalization_constant,
    poisson_kth_cdf,
    surmise_cdf,
    surmise_model,
)
from .ratios import RatioSeries, SeriesSource, ratios_from_level_rows

__all__ = [
    "TailSide",
    "TailWindow",
    "VerifyMode",
    "FitReport",
    "fit_beta_prime_mle",
    "tail_exponent",
    "duality_test",
    "ks_distance",
    "verify_scaling",
    "dumps_report_json",
]

_FIT_BOUNDS = (0.0, 60.0)
_FIT_XATOL = 1e-6
_CI_DROP = 1.92  # 95% profile-likelihood drop for one parameter
_TAIL_BINS = 10

# default windows for surmise-scale ratio data; always recorded in the report
DEFAULT_SMALL_WINDOW = (0.02, 0.2)
DEFAULT_LARGE_WINDOW = (5.0, 50.0)


class TailSide(Enum):
    SMALL_R = "small_r"
    LARGE_R = "large_r"


class VerifyMode(Enum):
    SURMISE = "surmise"
    LARGE_N = "large_n"


@dataclass(frozen=True)
class TailWindow:
    """Ratio range used for one tail-slope regression."""

    lo: float
    hi: float
    min_count: int = 500

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise DomainError(f"need 0 < lo < hi, got [{self.lo}, {self.hi}]")
        if self.min_count < 3:
            raise DomainError("min_count must be at least 3")


# ---------------------------------------------------------------------------
# maximum-likelihood fit of the effective index
# ---------------------------------------------------------------------------


def _sufficient_stats(values: np.ndarray):
    # mean log(r + r^2) and mean log(1 + r + r^2), overflow-safe
    log_r = np.log(values)
    u = np.where(values <= 1.0, values, 1.0 / values)
    log_q = np.log1p(u * (1.0 + u)) + np.where(values <= 1.0, 0.0, 2.0 * log_r)
    return float(np.mean(log_r + np.log1p(values))), float(np.mean(log_q))


def fit_beta_prime_mle(series: RatioSeries, bounds=_FIT_BOUNDS, xatol=_FIT_XATOL):
    """Maximum-likelihood effective index and its 95% profile CI halfwidth.

    The mean log-likelihood of the family is linear in two sufficient
    statistics, so each objective evaluation costs one cached normalization
    lookup regardless of sample size.  The optimizer is scipy's bounded
    Brent (golden section with parabolic refinement).

    Raises
    ------
    EmptySeriesError
        If the series has no values.
    OptimizerNonconvergenceError
        If the maximum is pushed against the upper index bound, which is the
        signature of degenerate input (e.g. all ratios identical).
    """
    if len(series) == 0:
        raise EmptySeriesError("cannot fit an empty ratio series")
    s1, s2 = _sufficient_stats(series.values)

    def mean_loglik(bp):
        return bp * s1 - (1.0 + 1.5 * bp) * s2 - log_normalization_constant(bp)

    res = minimize_scalar(
        lambda bp: -mean_loglik(bp),
        bounds=bounds,
        method="bounded",
        options={"xatol": xatol},
    )
    if not res.success:
        raise OptimizerNonconvergenceError(f"index fit failed: {res.message}")
    b_hat = float(res.x)
    if b_hat >= bounds[1] - 100 * xatol:
        raise OptimizerNonconvergenceError(
            f"likelihood maximum pushed to the upper index bound ({bounds[1]}); "
            "input looks degenerate for this family"
        )

    # profile-likelihood interval: index values where the total log-likelihood
    # falls ci_drop below its maximum
    n = len(series)
    target = mean_loglik(b_hat) - _CI_DROP / n

    def gap(bp):
        return mean_loglik(bp) - target

    lo = bounds[0]
    if b_hat > bounds[0] and gap(bounds[0]) < 0:
        lo = brentq(gap, bounds[0], b_hat, xtol=xatol)
    hi = bounds[1]
    if gap(bounds[1]) < 0:
        hi = brentq(gap, b_hat, bounds[1], xtol=xatol)
    halfwidth = max(b_hat - lo, hi - b_hat)
    return b_hat, float(halfwidth)


# ---------------------------------------------------------------------------
# tail-slope regression
# ---------------------------------------------------------------------------


def tail_exponent(series: RatioSeries, side: TailSide, window: TailWindow, nbins: int = _TAIL_BINS):
    """Power-law exponent of one tail: WLS slope of ln density vs ln r.

    The in-window values are binned on a logarithmic grid; bin densities are
    regressed against the geometric bin centers with the bin counts as
    weights.  Returns ``(slope, stderr)``.

    Raises
    ------
    InsufficientTailSamplesError
        If fewer than ``window.min_count`` samples fall inside the window
        (enlarge the trial count or the window), or if fewer than three bins
        are occupied.
    """
    if len(series) == 0:
        raise EmptySeriesError("cannot regress an empty ratio series")
    values = series.values
    inside = values[(values >= window.lo) & (values <= window.hi)]
    if inside.size < window.min_count:
        raise InsufficientTailSamplesError(
            f"{inside.size} samples in {side.value} window "
            f"[{window.lo:g}, {window.hi:g}], need {window.min_count}"
        )
    edges = np.geomspace(window.lo, window.hi, nbins + 1)
    counts, _ = np.histogram(inside, bins=edges)
    occupied = counts > 0
    if occupied.sum() < 3:
        raise InsufficientTailSamplesError(
            f"only {int(occupied.sum())} occupied bins in the {side.value} window"
        )
    widths = np.diff(edges)
    x = np.log(np.sqrt(edges[:-1] * edges[1:]))[occupied]
    y = np.log(counts[occupied] / (len(series) * widths[occupied]))
    w = counts[occupied].astype(float)

    x_bar = np.average(x, weights=w)
    y_bar = np.average(y, weights=w)
    sxx = float(np.sum(w * (x - x_bar) ** 2))
    slope = float(np.sum(w * (x - x_bar) * (y - y_bar)) / sxx)
    resid = y - (y_bar + slope * (x - x_bar))
    chi2_red = float(np.sum(w * resid**2)) / max(x.size - 2, 1)
    stderr = math.sqrt(chi2_red / sxx)
    return slope, stderr


# ---------------------------------------------------------------------------
# distribution-level checks
# ---------------------------------------------------------------------------


def duality_test(series: RatioSeries):
    """Two-sample KS statistic between {r} and {1/r}.

    The two samples are dependent (one is the other's reciprocals), so the
    p-value is descriptive only; pass criteria should threshold the
    statistic at the binomial fluctuation scale of the sample size.
    """
    if len(series) == 0:
        raise EmptySeriesError("cannot run the duality test on an empty series")
    res = ks_2samp(series.values, 1.0 / series.values, method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_distance(series: RatioSeries, model_cdf) -> float:
    """Sup-norm distance between the series ECDF and a model CDF callable."""
    if len(series) == 0:
        raise EmptySeriesError("cannot compute KS distance of an empty series")
    xs = np.sort(series.values)
    f = np.asarray(model_cdf(xs), dtype=float)
    n = xs.size
    steps = np.arange(1, n + 1) / n
    return float(max(np.max(steps - f), np.max(f - (steps - 1 / n))))


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitReport:
    """Outcome of one scaling-law verification run."""

    k: int
    beta_input: float
    n_levels: int
    trials: int
    seed: int
    mode: VerifyMode
    model: MatrixModel
    scale_a: float
    bulk_fraction: float
    small_window: TailWindow
    large_window: TailWindow
    tail_bins: int
    predicted_beta_prime: float
    beta_prime_hat: float
    beta_prime_ci_halfwidth: float
    slope_small_r: float
    slope_small_r_stderr: float
    slope_large_r: float
    slope_large_r_stderr: float
    ks_distance: float
    duality_ks: float
    duality_p: float
    n_ratios: int
    discarded_realizations: int
    flags: tuple = ()

    def __post_init__(self):
        if self.trials <= 0:
            raise DomainError("trials must be positive")
        if not 0.0 <= self.ks_distance <= 1.0:
            raise DomainError("ks_distance must lie in [0, 1]")
        if not math.isnan(self.beta_prime_hat) and self.beta_prime_hat < 0:
            raise DomainError("beta_prime_hat must be non-negative")
        if self.predicted_beta_prime != beta_prime(self.k, self.beta_input):
            raise DomainError("predicted_beta_prime inconsistent with (k, beta)")

    def to_dict(self) -> dict:
        """Stable field set used for JSON serialization (schema 1)."""
        return {
            "schema": 1,
            "toolkit_version": __version__,
            "k": self.k,
            "beta_input": self.beta_input,
            "n_levels": self.n_levels,
            "trials": self.trials,
            "seed": self.seed,
            "mode": self.mode.value,
            "model": self.model.value,
            "scale_a": self.scale_a,
            "bulk_fraction": self.bulk_fraction,
            "small_window": {
                "lo": self.small_window.lo,
                "hi": self.small_window.hi,
                "min_count": self.small_window.min_count,
            },
            "large_window": {
                "lo": self.large_window.lo,
                "hi": self.large_window.hi,
                "min_count": self.large_window.min_count,
            },
            "tail_bins": self.tail_bins,
            "predicted_beta_prime": self.predicted_beta_prime,
            "beta_prime_hat": self.beta_prime_hat,
            "beta_prime_ci_halfwidth": self.beta_prime_ci_halfwidth,
            "slope_small_r": self.slope_small_r,
            "slope_small_r_stderr": self.slope_small_r_stderr,
            "slope_large_r": self.slope_large_r,
            "slope_large_r_stderr": self.slope_large_r_stderr,
            "ks_distance": self.ks_distance,
            "duality_ks": self.duality_ks,
            "duality_p": self.duality_p,
            "n_ratios": self.n_ratios,
            "discarded_realizations": self.discarded_realizations,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return dumps_report_json(self.to_dict())


def _json_fragment(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        # JSON has no NaN/inf; flags carry the explanation
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_json_fragment(v) for v in value) + "]"
    if isinstance(value, dict):
        items = (f"{json.dumps(k)}: {_json_fragment(v)}" for k, v in value.items())
        return "{" + ", ".join(items) + "}"
    raise DomainError(f"cannot serialize {type(value).__name__} to report JSON")


def dumps_report_json(doc: dict) -> str:
    """Serialize a report document deterministically.

    Floats are written with 17 significant digits and keys keep their
    insertion order, so identical runs produce byte-identical files.
    """
    lines = [f"  {json.dumps(k)}: {_json_fragment(v)}" for k, v in doc.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def _bulk_slice(n: int, fraction: float):
    keep = math.ceil(fraction * n)
    drop = n - keep
    lo = (drop + 1) // 2
    return lo, lo + keep


def _sample_chunk(args):
    spec, k, seed, start, count, bulk_fraction = args
    rows = sample_eigenvalue_block(spec, seed, start, count)
    if bulk_fraction < 1.0:
        lo, hi = _bulk_slice(spec.n, bulk_fraction)
        rows = rows[:, lo:hi]
    return ratios_from_level_rows(rows, k)


def pooled_ratio_series(
    spec: EnsembleSpec,
    k: int,
    trials: int,
    seed: int,
    bulk_fraction: float = 1.0,
    workers: int = 1,
):
    """Sample ``trials`` realizations and pool their k-th order ratios.

    Work is split into fixed-size chunks of trial indices and reduced in
    chunk order, so the pooled array is identical for any worker count.
    Returns ``(series, discarded_realizations)``.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    n_used = _bulk_slice(spec.n, bulk_fraction)
    if (n_used[1] - n_used[0]) < 2 * k + 1:
        raise DomainError(
            f"bulk-filtered spectra keep {n_used[1] - n_used[0]} levels; "
            f"order {k} needs at least {2 * k + 1}"
        )
    tasks = [
        (spec, k, seed, start, min(CHUNK_TRIALS, trials - start), bulk_fraction)
        for start in range(0, trials, CHUNK_TRIALS)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sample_chunk, tasks, chunksize=1))
    else:
        results = [_sample_chunk(t) for t in tasks]
    values = np.concatenate([r[0] for r in results]) if results else np.empty(0)
    discarded = sum(r[1] for r in results)
    source = SeriesSource(spec.digest(), bulk_fraction, trials)
    return RatioSeries(k, values, source), discarded


def verify_scaling(
    spec: EnsembleSpec,
    k: int,
    trials: int,
    mode: VerifyMode,
    seed: int,
    bulk_fraction: float | None = None,
    small_window: TailWindow | None = None,
    large_window: TailWindow | None = None,
    tail_bins: int = _TAIL_BINS,
    workers: int = 1,
    keep_series: bool = False,
):
    """Run the full verification pipeline and return a :class:`FitReport`.

    ``mode`` picks the bulk convention: surmise runs keep every level of the
    minimal n = 2k+1 spectra, large-n runs keep the central half by default.
    The goodness-of-fit reference is the family density at the predicted
    index (the exact Poisson density for uncorrelated spectra).  Tail
    windows that end up underpopulated are flagged in the report, never
    silently dropped.  With ``keep_series=True`` the pooled ratio series is
    returned alongside the report.
    """
    if mode is VerifyMode.SURMISE and spec.n != 2 * k + 1:
        raise DomainError(
            f"surmise mode requires n = 2k + 1 = {2 * k + 1}, got n = {spec.n}"
        )
    if bulk_fraction is None:
        bulk_fraction = 1.0 if mode is VerifyMode.SURMISE else 0.5
    small_window = small_window or TailWindow(*DEFAULT_SMALL_WINDOW)
    large_window = large_window or TailWindow(*DEFAULT_LARGE_WINDOW)

    poisson = spec.model is MatrixModel.POISSON_UNCORRELATED
    beta_input = 0.0 if poisson else spec.beta
    predicted = beta_prime(k, beta_input)

    series, discarded = pooled_ratio_series(
        spec, k, trials, seed, bulk_fraction=bulk_fraction, workers=workers
    )
    if len(series) < 100:
        raise DomainError(
            f"only {len(series)} pooled ratios; increase trials or levels"
        )

    flags = []
    b_hat, ci_halfwidth = fit_beta_prime_mle(series)

    slopes = {}
    for side, window in (
        (TailSide.SMALL_R, small_window),
        (TailSide.LARGE_R, large_window),
    ):
        try:
            slopes[side] = tail_exponent(series, side, window, nbins=tail_bins)
        except InsufficientTailSamplesError:
            slopes[side] = (float("nan"), float("nan"))
            flags.append(f"{side.value}_tail_insufficient")

    dual_ks, dual_p = duality_test(series)
    if poisson:
        reference_cdf = lambda x: poisson_kth_cdf(x, k)  # noqa: E731
    else:
        model = surmise_model(predicted)
        reference_cdf = lambda x: surmise_cdf(x, model)  # noqa: E731
    ks = ks_distance(series, reference_cdf)

    report = FitReport(
        k=int(k),
        beta_input=float(beta_input),
        n_levels=spec.n,
        trials=int(trials),
        seed=int(seed),
        mode=mode,
        model=spec.model,
        scale_a=spec.scale_a,
        bulk_fraction=float(bulk_fraction),
        small_window=small_window,
        large_window=large_window,
        tail_bins=int(tail_bins),
        predicted_beta_prime=float(predicted),
        beta_prime_hat=b_hat,
        beta_prime_ci_halfwidth=ci_halfwidth,
        slope_small_r=slopes[TailSide.SMALL_R][0],
        slope_small_r_stderr=slopes[TailSide.SMALL_R][1],
        slope_large_r=slopes[TailSide.LARGE_R][0],
        slope_large_r_stderr=slopes[TailSide.LARGE_R][1],
        ks_distance=ks,
        duality_ks=dual_ks,
        duality_p=dual_p,
        n_ratios=len(series),
        discarded_realizations=int(discarded),
        flags=tuple(flags),
    )
    return (report, series) if keep_series else report
