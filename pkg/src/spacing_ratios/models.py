"""Analytic reference densities for spacing-ratio statistics.

The central object is the one-parameter family of ratio densities

    P(r, b) = (1/Z_b) * (r + r^2)^b / (1 + r + r^2)^(1 + 3b/2),   r > 0,

whose index b is the (possibly generalized, non-integer) Dyson index.  A
k-th order ratio of a beta-ensemble follows this family with the effective
index b = k(k+1)/2 * beta + (k - 1), and the family obeys

    P(r, b) -> r^b          as r -> 0,
    P(r, b) -> r^(-2-b)     as r -> infinity,
    P(r, b)  = r^(-2) P(1/r, b)   (duality) for every r > 0.

Uncorrelated (Poisson) spectra get their own exact k-th order density with
tail exponents (k-1, -k-1), which coincide with the family exponents at
beta = 0.

Normalization constants are computed by adaptive quadrature on the
compactified variable t = r/(1+r) and cached per index; no closed forms are
assumed.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.special import betainc

from .errors import DomainError, QuadratureNonconvergenceError

__all__ = [
    "beta_prime",
    "normalization_constant",
    "log_normalization_constant",
    "SurmiseModel",
    "surmise_model",
    "surmise_pdf",
    "surmise_logpdf",
    "surmise_cdf",
    "surmise_ppf",
    "draw_from_surmise",
    "CorrectionModel",
    "correction_pdf",
    "poisson_kth_pdf",
    "poisson_kth_logpdf",
    "poisson_kth_cdf",
    "asymptotic_exponents",
    "poisson_asymptotic_exponents",
    "local_log_slope",
    "save_curve_csv",
]

_Z_TOL = 1e-10
_CDF_GRID_POINTS = 16385

# insert-once caches keyed by the index; concurrent duplicate computation is
# harmless (identical values, atomic dict assignment)
_Z_CACHE: dict = {}
_CDF_CACHE: dict = {}


def beta_prime(k: int, beta: float) -> float:
    """Effective Dyson index of the k-th order ratio: k(k+1)/2 * beta + k - 1."""
    if int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k}")
    if beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    k = int(k)
    return (k * (k + 1) // 2) * beta + (k - 1)


def _log_peak(bp: float) -> float:
    # log of the compactified integrand's maximum, attained at t = 1/2
    return bp * math.log(0.25) - (1.0 + 1.5 * bp) * math.log(0.75)


def _compactified_log_integrand(t, bp):
    # integrand of Z under r = t/(1-t):  (t(1-t))^bp * (1 - t + t^2)^(-1-3bp/2)
    return bp * np.log(t * (1.0 - t)) - (1.0 + 1.5 * bp) * np.log(1.0 - t + t * t)


def _compute_log_z(bp: float) -> float:
    ln_m = _log_peak(bp)

    def scaled(t):
        if t <= 0.0 or t >= 1.0:
            return 0.0 if bp > 0 else math.exp(-ln_m)
        return math.exp(_compactified_log_integrand(t, bp) - ln_m)

    for limit in (200, 800):
        integral, abserr = quad(
            scaled, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=limit, points=[0.5]
        )[:2]
        if abserr <= _Z_TOL * max(1.0, integral):
            return ln_m + math.log(integral)
    raise QuadratureNonconvergenceError(
        f"normalization quadrature for index {bp} did not reach tolerance"
    )


def log_normalization_constant(beta_prime_value: float) -> float:
    """log of Z for the family index; cached."""
    bp = float(beta_prime_value)
    if bp < 0:
        raise DomainError(f"index must be >= 0, got {bp}")
    hit = _Z_CACHE.get(bp)
    if hit is None:
        hit = _compute_log_z(bp)
        _Z_CACHE[bp] = hit
    return hit


def normalization_constant(beta_prime_value: float) -> float:
    """Normalization constant Z making P(r, index) integrate to one.

    Absolute quadrature error is at most 1e-10 relative to Z.
    """
    return math.exp(log_normalization_constant(beta_prime_value))


@dataclass(frozen=True)
class SurmiseModel:
    """Ratio density of the generalized family at a fixed index."""

    beta_prime: float
    z_norm: float
    norm_tolerance: float = _Z_TOL


def surmise_model(beta_prime_value: float, norm_tolerance: float = _Z_TOL) -> SurmiseModel:
    """Build the model for a given index, computing Z by quadrature."""
    bp = float(beta_prime_value)
    if bp < 0:
        raise DomainError(f"index must be >= 0, got {bp}")
    return SurmiseModel(bp, normalization_constant(bp), norm_tolerance)


def _check_positive(r):
    r = np.asarray(r, dtype=float)
    if r.size and (np.any(r <= 0) or not np.all(np.isfinite(r))):
        raise DomainError("r must be positive and finite")
    return r


def surmise_logpdf(r, model: SurmiseModel):
    """log P(r, index), stable from the deep left tail to the deep right tail."""
    r = _check_positive(r)
    bp = model.beta_prime
    log_r = np.log(r)
    # log(1 + r + r^2), factoring r^2 out above r = 1 to avoid overflow:
    # both branches reduce to log1p(u*(1+u)) with u = min(r, 1/r) <= 1
    small = r <= 1.0
    u = np.where(small, r, 1.0 / r)
    log_q = np.log1p(u * (1.0 + u)) + np.where(small, 0.0, 2.0 * log_r)
    out = bp * (log_r + np.log1p(r)) - (1.0 + 1.5 * bp) * log_q - math.log(model.z_norm)
    return out if out.ndim else float(out)


def surmise_pdf(r, model: SurmiseModel):
    """P(r, index); evaluated in the log domain so extreme r stays finite."""
    out = np.exp(surmise_logpdf(r, model))
    return out if np.ndim(out) else float(out)


def _cdf_table(bp: float):
    """Cached (t_grid, cdf) table of the model CDF on t = r/(1+r)."""
    hit = _CDF_CACHE.get(bp)
    if hit is not None:
        return hit
    t = np.linspace(0.0, 1.0, _CDF_GRID_POINTS)
    inner = t[1:-1]
    g = np.zeros_like(t)
    log_z = log_normalization_constant(bp)
    g[1:-1] = np.exp(_compactified_log_integrand(inner, bp) - log_z)
    if bp == 0:
        g[0] = math.exp(-log_z)
        g[-1] = math.exp(-log_z)
    cdf = cumulative_simpson(g, x=t, initial=0.0)
    cdf /= cdf[-1]
    _CDF_CACHE[bp] = (t, cdf)
    return t, cdf


def surmise_cdf(r, model: SurmiseModel):
    """Model CDF, interpolated from quadrature on the compactified variable."""
    r = _check_positive(r)
    t_grid, cdf = _cdf_table(model.beta_prime)
    out = np.interp(r / (1.0 + r), t_grid, cdf)
    return out if out.ndim else float(out)


def surmise_ppf(q, model: SurmiseModel):
    """Quantile function of the model (inverse of :func:`surmise_cdf`)."""
    q = np.asarray(q, dtype=float)
    if q.size and (np.any(q <= 0) or np.any(q >= 1)):
        raise DomainError("quantiles must lie strictly inside (0, 1)")
    t_grid, cdf = _cdf_table(model.beta_prime)
    t = np.interp(q, cdf, t_grid)
    out = t / (1.0 - t)
    return out if out.ndim else float(out)


def draw_from_surmise(model: SurmiseModel, size: int, rng) -> np.ndarray:
    """Inverse-CDF draws from the model.

    ``rng`` may be an ``RngStream`` or a ``numpy.random.Generator``.  The
    draws share only the density's mathematics with the likelihood fitter,
    not its code path, so fitting them back is a genuine consistency check.
    """
    gen = rng.generator() if hasattr(rng, "generator") else rng
    u = gen.random(size)
    lo = 0.5 / size
    np.clip(u, lo, 1.0 - lo, out=u)
    return surmise_ppf(u, model)


@dataclass(frozen=True)
class CorrectionModel:
    """Finite-size correction ansatz added to the family density.

    delta P(r) = c_amp/(1+r)^2 [ (r + 1/r)^(-b) - c_beta (r + 1/r)^(-1-b) ]

    with b the effective index.  The amplitude constants are free calibration
    parameters; the ansatz preserves both tail exponents and the duality.
    """

    c_amp: float
    c_beta: float
    beta_prime: float


def correction_pdf(r, corr: CorrectionModel):
    """Evaluate the correction ansatz at r > 0."""
    r = _check_positive(r)
    bp = corr.beta_prime
    s = r + 1.0 / r
    out = corr.c_amp / (1.0 + r) ** 2 * (s ** (-bp) - corr.c_beta * s ** (-1.0 - bp))
    return out if out.ndim else float(out)


def _poisson_coeff(k: int) -> int:
    return math.factorial(2 * k - 1) // (math.factorial(k - 1) ** 2)


def poisson_kth_logpdf(r, k: int):
    r = _check_positive(r)
    if int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k}")
    k = int(k)
    out = math.log(_poisson_coeff(k)) + (k - 1) * np.log(r) - 2 * k * np.log1p(r)
    return out if out.ndim else float(out)


def poisson_kth_pdf(r, k: int):
    """Exact k-th order ratio density of uncorrelated spectra,
    (2k-1)!/((k-1)!)^2 * r^(k-1) / (1+r)^(2k)."""
    out = np.exp(poisson_kth_logpdf(r, k))
    return out if np.ndim(out) else float(out)


def poisson_kth_cdf(r, k: int):
    """CDF of the Poisson k-th order density (a Beta(k, k) law in r/(1+r))."""
    r = _check_positive(r)
    if int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k}")
    out = betainc(int(k), int(k), r / (1.0 + r))
    return out if np.ndim(out) else float(out)


def asymptotic_exponents(beta_prime_value: float):
    """Exact tail exponents of the family: r^b as r->0, r^(-2-b) as r->inf."""
    bp = float(beta_prime_value)
    if bp < 0:
        raise DomainError(f"index must be >= 0, got {bp}")
    return bp, -2.0 - bp


def poisson_asymptotic_exponents(k: int):
    """Tail exponents of the Poisson k-th order density: (k-1, -k-1)."""
    if int(k) != k or k < 1:
        raise DomainError(f"k must be an integer >= 1, got {k}")
    return float(k - 1), float(-k - 1)


def local_log_slope(logpdf, r: float, step: float = 1.001) -> float:
    """Central-difference estimate of d log f / d log r at r."""
    if step <= 1.0:
        raise DomainError(f"step must exceed 1, got {step}")
    return (logpdf(r * step) - logpdf(r / step)) / (2.0 * math.log(step))


def save_curve_csv(path, r_values, pdf_values, meta: str | None = None) -> None:
    """Write a model curve as CSV rows ``r, pdf`` on the caller's grid."""
    r_values = np.asarray(r_values, dtype=float)
    pdf_values = np.asarray(pdf_values, dtype=float)
    if r_values.shape != pdf_values.shape or r_values.ndim != 1:
        raise DomainError("r and pdf grids must be 1-D and congruent")
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write(f"# {meta}\n")
        fh.write("r,pdf\n")
        for rv, pv in zip(r_values, pdf_values):
            fh.write(f"{rv:.17g},{pv:.17g}\n")
