"""Shared fixtures: canned models and cached pipeline stages.

The heavy Monte Carlo stages are session-scoped so the acceptance criteria
can share one run per scenario.  Every stage is seeded; the whole suite is
deterministic.
"""

import time

import numpy as np
import pytest

from hawkeslab.config import RunConfig
from hawkeslab.model import Kernel, RateFunction, validate_model
from hawkeslab import pipelines

MASTER_SEED = 3


def linear_model():
    return validate_model(Kernel.exponential(1.0, 2.0), RateFunction.linear(1.0))


def poisson_model(rate=2.0):
    return validate_model(Kernel.zero(), RateFunction.linear(rate))


def saturating_model():
    return validate_model(Kernel.exponential(1.0, 1.0), RateFunction.saturating(0.5, 0.4))


@pytest.fixture(scope="session")
def model_linear():
    return linear_model()


@pytest.fixture(scope="session")
def model_poisson():
    return poisson_model()


@pytest.fixture(scope="session")
def model_saturating():
    return saturating_model()


# --- acceptance-budget stages (one run each, shared across criteria) --------

@pytest.fixture(scope="session")
def poisson_estimate():
    cfg = RunConfig(kernel_family="zero", kernel_params={}, rate_family="linear",
                    rate_params={"nu": 2.0}, horizon=10_000.0, replications=50,
                    seed=MASTER_SEED)
    t0 = time.perf_counter()
    stage = pipelines.estimate_stage(poisson_model(), cfg, workers=1)
    stage["elapsed"] = time.perf_counter() - t0
    return stage


@pytest.fixture(scope="session")
def linear_estimate():
    cfg = RunConfig(horizon=50_000.0, replications=200, seed=MASTER_SEED)
    return pipelines.estimate_stage(linear_model(), cfg, workers=1)


@pytest.fixture(scope="session")
def saturating_estimate():
    cfg = RunConfig(kernel_family="exponential", kernel_params={"a": 1.0, "b": 1.0},
                    rate_family="saturating", rate_params={"nu": 0.5, "alpha": 0.4},
                    horizon=50_000.0, replications=200, seed=MASTER_SEED)
    return pipelines.estimate_stage(saturating_model(), cfg, workers=1)


@pytest.fixture(scope="session")
def linear_fclt():
    cfg = RunConfig(fclt_horizon=2000.0, fclt_replications=1000, seed=MASTER_SEED)
    return pipelines.fclt_stage(linear_model(), cfg, mu=2.0, workers=1)


@pytest.fixture(scope="session")
def poisson_fclt():
    cfg = RunConfig(kernel_family="zero", kernel_params={}, rate_family="linear",
                    rate_params={"nu": 2.0}, fclt_horizon=2000.0,
                    fclt_replications=1000, seed=MASTER_SEED)
    return pipelines.fclt_stage(poisson_model(), cfg, mu=2.0, workers=1)


@pytest.fixture(scope="session")
def saturating_fclt(saturating_estimate):
    cfg = RunConfig(kernel_family="exponential", kernel_params={"a": 1.0, "b": 1.0},
                    rate_family="saturating", rate_params={"nu": 0.5, "alpha": 0.4},
                    fclt_horizon=2000.0, fclt_replications=1000, seed=MASTER_SEED)
    mu_hat = saturating_estimate["stats"].mu_hat
    stage = pipelines.fclt_stage(saturating_model(), cfg, mu=mu_hat, workers=1)
    stage["mu_hat"] = mu_hat
    return stage


@pytest.fixture(scope="session")
def linear_lil(linear_estimate):
    cfg = RunConfig(lil_n_max=100_000, lil_replications=4, seed=MASTER_SEED)
    t0 = time.perf_counter()
    stage = pipelines.lil_stage(linear_model(), cfg, mu=2.0,
                                sigma2=linear_estimate["stats"].sigma2_series, workers=1)
    stage["elapsed"] = time.perf_counter() - t0
    return stage
