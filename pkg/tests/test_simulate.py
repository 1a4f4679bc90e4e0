import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.optimize import brentq

from hawkeslab.errors import ConfigError
from hawkeslab.estimate import bin_counts, poisson_fit_chi2
from hawkeslab.model import History, Kernel, RateFunction, validate_model
from hawkeslab.simulate import (
    EventSequence,
    compensator_at,
    simulate,
    stationary_burnin,
    stationary_window,
    thinning_bound,
    transformed_interarrivals,
)

LINEAR = validate_model(Kernel.exponential(1.0, 2.0), RateFunction.linear(1.0))
SATURATING = validate_model(Kernel.exponential(1.0, 1.0), RateFunction.saturating(0.5, 0.4))
CLIPPED = validate_model(Kernel.exponential(2.0, 2.0), RateFunction.clipped_linear(1.0, 0.8, 0.9))
POWER = validate_model(Kernel.power_law(1.0, 3.0, 1.0), RateFunction.linear(1.0))
POISSON2 = validate_model(Kernel.zero(), RateFunction.linear(2.0))


def test_determinism_bit_identical():
    a = simulate(LINEAR, History.empty(), 200.0, 42)
    b = simulate(LINEAR, History.empty(), 200.0, 42)
    assert np.array_equal(a.events.times, b.events.times)
    assert np.array_equal(a.lambda_integral, b.lambda_integral)
    assert np.array_equal(a.intensity_at_events, b.intensity_at_events)
    c = simulate(LINEAR, History.empty(), 200.0, 43)
    assert not np.array_equal(a.events.times, c.events.times)


def test_zero_kernel_reduces_to_poisson_mean():
    t, reps, rate = 50.0, 200, 2.0
    total = sum(simulate(POISSON2, History.empty(), t, (1, 0, r), grid_points=0).events.times.size
                for r in range(reps))
    mean = total / reps
    se = math.sqrt(rate * t / reps)
    assert abs(mean - rate * t) < 4.0 * se


def test_zero_kernel_unit_counts_are_poisson():
    counts = []
    for r in range(50):
        out = simulate(POISSON2, History.empty(), 100.0, (2, 0, r), grid_points=0)
        counts.append(bin_counts(out.events, 0.0, 100).counts)
    _, p, _ = poisson_fit_chi2(np.concatenate(counts), 2.0)
    assert p >= 0.01


def test_linear_long_run_rate():
    # mean of N(0,T]/T over 200 replications approaches nu / (1 - kernel mass)
    t, reps = 2000.0, 200
    total = sum(simulate(LINEAR, History.empty(), t, (99, 0, r), grid_points=0).events.times.size
                for r in range(reps))
    assert abs(total / reps / t - 2.0) < 0.05


@pytest.mark.parametrize("model", [LINEAR, SATURATING, CLIPPED, POWER],
                         ids=["linear", "saturating", "clipped", "power-law"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_event_times_strictly_increase(model, seed):
    horizon = 60.0 if model is POWER else 150.0
    out = simulate(model, History.empty(), horizon, (7, 0, seed), grid_points=0)
    times = out.events.times
    assert np.all(np.diff(times) > 0.0)
    assert times.size == 0 or (times[0] > 0.0 and times[-1] <= horizon)


def test_thinning_bound_values():
    assert thinning_bound(LINEAR, 0.0) == 1.0
    assert thinning_bound(LINEAR, 3.0) == 4.0
    assert thinning_bound(SATURATING, 1.0) == pytest.approx(0.7, rel=1e-15)
    with pytest.raises(ValueError):
        thinning_bound(LINEAR, -0.5)


def test_intensity_at_events_never_below_base():
    for model in (LINEAR, SATURATING, CLIPPED):
        out = simulate(model, History.empty(), 300.0, 5)
        assert np.all(out.intensity_at_events >= model.rate.base * (1 - 1e-12))


def test_compensator_grid_properties():
    out = simulate(LINEAR, History.empty(), 100.0, 11, grid_points=51)
    assert out.lambda_integral[0] == 0.0
    assert np.all(np.diff(out.lambda_integral) >= 0.0)
    # grid values agree with a direct evaluation
    direct = compensator_at(LINEAR, out.events.times, out.grid_times)
    assert np.allclose(direct, out.lambda_integral, rtol=1e-12, atol=1e-12)


def test_compensator_zero_kernel_exact():
    out = simulate(POISSON2, History.empty(), 50.0, 3, grid_points=11)
    assert np.allclose(out.lambda_integral, 2.0 * out.grid_times, rtol=1e-15)


@pytest.mark.parametrize("model", [LINEAR, SATURATING, CLIPPED],
                         ids=["linear", "saturating", "clipped"])
def test_compensator_closed_form_vs_quadrature(model):
    """Closed-form compensator against numeric quadrature of the intensity."""
    rng = np.random.default_rng(17)
    times = np.sort(rng.uniform(-2.0, 10.0, size=25))
    times[0] = -1.5  # ensure a history segment
    a, b = model.kernel.params["a"], model.kernel.params["b"]

    def intensity(u):
        past = times[times < u]
        z = float(np.sum(a * np.exp(-b * (u - past))))
        from hawkeslab.model import rate_eval
        return rate_eval(model.rate, z)

    queries = np.array([0.0, 0.7, 3.3, 9.9, 10.0])
    got = compensator_at(model, times, queries)
    for q, g in zip(queries, got):
        want, err = quad(intensity, 0.0, q, limit=400,
                         points=times[(times > 0) & (times < q)] if q > 0 else None)
        assert g == pytest.approx(want, abs=max(1e-8, 4.0 * err))


def test_compensator_history_increases_intensity():
    events = np.array([1.0, 2.5, 4.0])
    with_hist = compensator_at(LINEAR, np.concatenate([[-0.5], events]), np.array([5.0]))
    without = compensator_at(LINEAR, events, np.array([5.0]))
    assert with_hist[0] > without[0]


@pytest.mark.parametrize("model,reps,horizon", [
    (LINEAR, 30, 200.0),
    (SATURATING, 30, 300.0),
    (CLIPPED, 30, 200.0),
    (POWER, 25, 120.0),
], ids=["linear", "saturating", "clipped", "power-law"])
def test_time_rescaling_residuals_are_exp1(model, reps, horizon):
    gaps = [transformed_interarrivals(model,
                                      simulate(model, History.empty(), horizon,
                                               (31, 0, r), grid_points=0).events.times)
            for r in range(reps)]
    pooled = np.concatenate(gaps)
    assert pooled.size > 300
    assert stats.kstest(pooled, "expon").pvalue >= 0.01


def test_simulation_with_history_is_deterministic_and_valid():
    hist = History(np.array([-2.0, -0.3]))
    out1 = simulate(LINEAR, hist, 50.0, 13)
    out2 = simulate(LINEAR, hist, 50.0, 13)
    assert np.array_equal(out1.events.times, out2.events.times)
    assert np.all(np.diff(out1.events.times) > 0)


def test_stationary_burnin_zero_kernel():
    assert stationary_burnin(POISSON2, 1e-6) == 0.0


def test_stationary_burnin_matches_quadrature_root():
    # residual(B) = (lipschitz/margin) * int_B^inf t h(t) dt; root found by
    # brentq on the quadrature form, then the function returns the smallest
    # 0.01-grid value strictly below epsilon.
    eps = 1e-3

    def residual(bound):
        val, _ = quad(lambda s: s * math.exp(-2.0 * s), bound, np.inf)
        return 2.0 * val

    root = brentq(lambda bb: residual(bb) - eps, 0.0, 50.0, xtol=1e-12)
    got = stationary_burnin(LINEAR, eps)
    assert root <= got < root + 0.011
    assert residual(got) < eps
    assert got == pytest.approx(4.24, abs=1e-12)  # frozen for this model


def test_stationary_burnin_large_epsilon_is_zero():
    assert stationary_burnin(LINEAR, 10.0) == 0.0


def test_stationary_burnin_cap_error():
    with pytest.raises(ConfigError, match="cap"):
        stationary_burnin(LINEAR, 1e-9, cap=3.0)


def test_stationary_window_shifts_and_preserves():
    out = simulate(LINEAR, History.empty(), 30.0, 21)
    win = stationary_window(out, 10.0)
    assert win.horizon == pytest.approx(20.0)
    assert win.history_depth == pytest.approx(10.0)
    assert win.times.size == out.events.times.size
    assert np.allclose(win.times, out.events.times - 10.0)
    n_window = int(np.sum(out.events.times > 10.0))
    assert win.window_times.size == n_window
    with pytest.raises(ValueError):
        stationary_window(out, 30.0)


def test_event_sequence_validation():
    with pytest.raises(ValueError):
        EventSequence(times=np.array([1.0, 1.0]), horizon=2.0)
    with pytest.raises(ValueError):
        EventSequence(times=np.array([3.0]), horizon=2.0)
    seq = EventSequence(times=np.array([-0.5, 1.0, 1.5]), horizon=2.0, history_depth=1.0)
    assert seq.count(0.0, 2.0) == 2
    assert seq.window_times.tolist() == [1.0, 1.5]


def test_grid_points_zero_skips_compensator():
    out = simulate(LINEAR, History.empty(), 20.0, 4, grid_points=0)
    assert out.grid_times.size == 0 and out.lambda_integral.size == 0
