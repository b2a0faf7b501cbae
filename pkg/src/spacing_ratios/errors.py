"""Exception types shared across the toolkit."""


class SpacingRatiosError(Exception):
    """Base class for all toolkit errors."""


class DomainError(SpacingRatiosError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class DegenerateSpacingError(SpacingRatiosError):
    """A spacing ratio could not be formed because a spacing collapsed to zero."""


class InsufficientLevelsError(SpacingRatiosError, ValueError):
    """The spectrum has fewer levels than the requested ratio order needs."""


class TooFewLevelsError(SpacingRatiosError, ValueError):
    """A bulk filter would leave fewer than two levels."""


class BadEdgesError(SpacingRatiosError, ValueError):
    """Histogram bin edges are not strictly increasing."""


class QuadratureNonconvergenceError(SpacingRatiosError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class OptimizerNonconvergenceError(SpacingRatiosError):
    """The likelihood optimizer did not converge to an interior maximum."""


class EmptySeriesError(SpacingRatiosError, ValueError):
    """An operation requiring samples received an empty ratio series."""


class InsufficientTailSamplesError(SpacingRatiosError):
    """Too few samples fall inside a tail window for a slope fit.

    Signals that the caller should enlarge the trial count or the window.
    """
