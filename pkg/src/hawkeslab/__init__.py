"""Simulation and limit-theorem verification for self-exciting point processes."""

from .errors import (
    AssumptionError,
    ConfigError,
    DegenerateVarianceError,
    HawkesError,
    StabilityError,
)
from .model import (
    HawkesModel,
    History,
    Kernel,
    RateFunction,
    kernel_eval,
    kernel_tail_first_moment,
    kernel_tail_integral,
    rate_eval,
    validate_model,
)
from .simulate import (
    CoupledPair,
    EventSequence,
    SimulationOutput,
    compensator_at,
    replication_rng,
    simulate,
    simulate_coupled,
    stationary_burnin,
    stationary_window,
    thinning_bound,
    transformed_interarrivals,
)
from .estimate import (
    CountSeries,
    PathStatistics,
    TailDiagnostic,
    TruncationPolicy,
    bin_counts,
    coupling_gap_bound,
    default_truncation_cap,
    estimate_sigma2,
    linear_oracle,
    poisson_fit_chi2,
    tail_diagnostic,
)
from .config import RunConfig, load_config, parse_config, serialize_config

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "ConfigError",
    "CoupledPair",
    "CountSeries",
    "DegenerateVarianceError",
    "EventSequence",
    "HawkesError",
    "HawkesModel",
    "History",
    "Kernel",
    "PathStatistics",
    "RateFunction",
    "RunConfig",
    "SimulationOutput",
    "StabilityError",
    "TailDiagnostic",
    "TruncationPolicy",
    "bin_counts",
    "compensator_at",
    "coupling_gap_bound",
    "default_truncation_cap",
    "estimate_sigma2",
    "kernel_eval",
    "kernel_tail_first_moment",
    "kernel_tail_integral",
    "linear_oracle",
    "load_config",
    "parse_config",
    "poisson_fit_chi2",
    "rate_eval",
    "replication_rng",
    "serialize_config",
    "simulate",
    "simulate_coupled",
    "stationary_burnin",
    "stationary_window",
    "thinning_bound",
    "transformed_interarrivals",
    "validate_model",
    "__version__",
]
