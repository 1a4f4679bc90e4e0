"""Exception types shared across the package."""


class HawkesError(Exception):
    """Base class for all package errors."""


class StabilityError(HawkesError):
    """The model violates the subcriticality condition (gain times kernel mass >= 1)."""


class AssumptionError(HawkesError):
    """A kernel or rate function fails a structural requirement (monotonicity,
    finiteness at zero, positivity)."""


class ConfigError(HawkesError):
    """Invalid or unreadable run configuration."""


class DegenerateVarianceError(HawkesError):
    """The long-run variance estimate collapsed to zero or below.

    Either the input data is degenerate (far too short, or constant) or there
    is a bug upstream; a healthy stationary model always has positive variance.
    """
