"""Spectral spacing-ratio statistics for Gaussian beta-ensembles.

Sample eigenvalue spectra, form k-th order non-overlapping spacing ratios,
and verify that their distribution matches the nearest-neighbour ratio
family at the effective index k(k+1)/2 * beta + (k - 1), including the exact
tail exponents and the r <-> 1/r duality.
"""

__version__ = "0.1.0"

from .ensembles import (
    CHUNK_TRIALS,
    EnsembleSpec,
    MatrixModel,
    RngStream,
    Spectrum,
    sample_dense_gaussian,
    sample_eigenvalue_block,
    sample_poisson_spectrum,
    sample_spectrum,
    sample_surmise_spectrum,
    sample_tridiagonal_beta,
)
from .errors import (
    BadEdgesError,
    DegenerateSpacingError,
    DomainError,
    EmptySeriesError,
    InsufficientLevelsError,
    InsufficientTailSamplesError,
    OptimizerNonconvergenceError,
    QuadratureNonconvergenceError,
    SpacingRatiosError,
    TooFewLevelsError,
)
from .models import (
    CorrectionModel,
    SurmiseModel,
    asymptotic_exponents,
    beta_prime,
    correction_pdf,
    draw_from_surmise,
    local_log_slope,
    normalization_constant,
    poisson_asymptotic_exponents,
    poisson_kth_cdf,
    poisson_kth_pdf,
    surmise_cdf,
    surmise_logpdf,
    surmise_model,
    surmise_pdf,
    surmise_ppf,
)
from .ratios import (
    Binning,
    Ecdf,
    Histogram,
    RatioSeries,
    SeriesSource,
    bulk_filter,
    ecdf,
    histogram,
    kth_order_ratios,
    log_edges,
    spacings,
)
from .analysis import (
    FitReport,
    TailSide,
    TailWindow,
    VerifyMode,
    duality_test,
    fit_beta_prime_mle,
    ks_distance,
    pooled_ratio_series,
    tail_exponent,
    verify_scaling,
)
