import math

import numpy as np
import pytest

from hawkeslab.lil import (
    LilSequence,
    build_eta,
    build_lil_sequence,
    calibrate_lil_band,
    g_index,
    lil_schedule,
    strassen_check,
)

GRID = np.linspace(0.0, 1.0, 101)


def normal_sequence(seed, n_max, mu=0.0):
    rng = np.random.default_rng(seed)
    return build_lil_sequence(rng.standard_normal(n_max) + mu, mu, 1.0)


def naive_eta(seq, n, t):
    """Direct transcription of the interpolation display, linear scan for k."""
    s2n = seq.s2[n]
    denom = math.sqrt(2.0 * s2n * math.log(math.log(s2n)))
    pos = s2n * t
    k = n - 1
    for j in range(n):
        if seq.s2[j] <= pos <= seq.s2[j + 1]:
            k = j
            break
    return (seq.s_partial[k] + (pos - seq.s2[k]) / (seq.s2[k + 1] - seq.s2[k]) * seq.x[k]) / denom


# --- sequences ---------------------------------------------------------------

def test_constant_counts_give_zero_sums():
    seq = build_lil_sequence(np.full(100, 3.0), mu=3.0, s2_profile=1.0)
    assert np.all(seq.x == 0.0)
    assert np.all(seq.s_partial == 0.0)


def test_profile_variants_and_errors():
    counts = np.arange(10, dtype=float)
    seq = build_lil_sequence(counts, 0.0, 2.0)
    assert seq.s2[5] == 10.0
    custom = np.arange(1.0, 11.0)
    seq2 = build_lil_sequence(counts, 0.0, custom)
    assert seq2.s2[0] == 0.0 and seq2.s2[-1] == 10.0
    with pytest.raises(ValueError):
        build_lil_sequence(counts, 0.0, 0.0)
    with pytest.raises(ValueError):
        build_lil_sequence(counts, 0.0, np.ones(10))          # not strictly increasing
    with pytest.raises(ValueError):
        build_lil_sequence(counts, 0.0, np.arange(7.0))       # wrong length


def test_g_index_definition():
    s2 = np.arange(0.0, 11.0)  # profile s_n^2 = n
    assert g_index(s2, 4.5).value == 4
    assert g_index(s2, 4.0).value == 4
    assert g_index(s2, 0.5).value == 0
    assert g_index(s2, 100.0).value == 10
    with pytest.raises(ValueError):
        g_index(s2, -1.0)


def test_g_of_own_profile_is_identity():
    seq = normal_sequence(1, 500)
    for n in (5, 17, 200):
        assert g_index(seq, float(seq.s2[n])).value == n


def test_g_monotone():
    seq = normal_sequence(2, 300)
    vals = [g_index(seq, t).value for t in np.linspace(0.0, seq.s2[-1], 50)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# --- path construction -------------------------------------------------------

def test_eta_knot_values_exact():
    seq = normal_sequence(3, 200)
    n = 50
    denom = math.sqrt(2.0 * seq.s2[n] * math.log(math.log(seq.s2[n])))
    knots = seq.s2[: n + 1] / seq.s2[n]
    grid = np.unique(np.concatenate([[0.0, 1.0], knots]))
    path = build_eta(seq, n, grid)
    for k in range(n + 1):
        idx = int(np.argmin(np.abs(grid - knots[k])))
        assert path.values[idx] == pytest.approx(seq.s_partial[k] / denom, rel=1e-13, abs=1e-15)


def test_eta_endpoint_is_normalized_total_sum():
    seq = normal_sequence(4, 400)
    n = 300
    path = build_eta(seq, n, GRID)
    denom = math.sqrt(2.0 * seq.s2[n] * math.log(math.log(seq.s2[n])))
    assert path.endpoint == pytest.approx(seq.s_partial[n] / denom, rel=1e-13)


def test_eta_zero_increments_give_zero_path():
    seq = build_lil_sequence(np.full(60, 2.0), mu=2.0, s2_profile=1.0)
    path = build_eta(seq, 40, GRID)
    assert np.all(path.values == 0.0)
    assert path.norm_sup == 0.0


def test_eta_midpoint_is_average_of_knots():
    # with a linear profile, the midpoint of a knot interval interpolates
    # halfway between adjacent knot ordinates
    seq = normal_sequence(5, 64)
    n = 32
    k = 10
    t_mid = (seq.s2[k] + seq.s2[k + 1]) / 2.0 / seq.s2[n]
    grid = np.array([0.0, t_mid, 1.0])
    path = build_eta(seq, n, grid)
    denom = math.sqrt(2.0 * seq.s2[n] * math.log(math.log(seq.s2[n])))
    left = seq.s_partial[k] / denom
    right = seq.s_partial[k + 1] / denom
    assert path.values[1] == pytest.approx((left + right) / 2.0, rel=1e-12)


def test_eta_domain_errors():
    seq = normal_sequence(6, 100)
    with pytest.raises(ValueError):
        build_eta(seq, 2, GRID)        # s_n^2 = 2 <= e: loglog undefined
    with pytest.raises(ValueError):
        build_eta(seq, 0, GRID)
    with pytest.raises(ValueError):
        build_eta(seq, 101, GRID)
    with pytest.raises(ValueError):
        build_eta(seq, 50, np.array([0.0, 0.5]))   # grid must end at 1
    with pytest.raises(ValueError):
        build_eta(seq, 50, np.array([0.1, 1.0]))   # grid must start at 0


def test_eta_matches_naive_reevaluation_on_random_points():
    seq = normal_sequence(7, 2000)
    rng = np.random.default_rng(8)
    lo = g_index(seq, math.e).value + 1
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(lo, 2001))
        t = float(rng.random())
        grid = np.array([0.0, t, 1.0]) if 0.0 < t < 1.0 else GRID
        fast = build_eta(seq, n, grid).values[1 if 0.0 < t < 1.0 else 0]
        slow = naive_eta(seq, n, t if 0.0 < t < 1.0 else 0.0)
        scale = max(abs(slow), 1e-12)
        worst = max(worst, abs(fast - slow) / scale)
    assert worst <= 1e-12


def test_eta_scale_invariance_modulo_loglog():
    """Scaling the increments by c (and the profile by c^2) changes the path
    only through the loglog factor of the normalization; accounting for that
    factor the path is exactly invariant."""
    seq = normal_sequence(9, 500)
    c = 3.7
    scaled = LilSequence(x=seq.x * c, s_partial=seq.s_partial * c,
                         s2=seq.s2 * c * c, n_max=seq.n_max)
    n = 200
    p1 = build_eta(seq, n, GRID)
    p2 = build_eta(scaled, n, GRID)
    f1 = math.log(math.log(seq.s2[n]))
    f2 = math.log(math.log(scaled.s2[n]))
    assert np.allclose(p2.values * math.sqrt(f2), p1.values * math.sqrt(f1),
                       rtol=1e-12, atol=1e-14)


# --- schedules and reports ---------------------------------------------------

def test_lil_schedule_shape():
    seq = normal_sequence(10, 100_000)
    sched = lil_schedule(seq, points=20)
    assert sched.size >= 20
    assert sched[0] > g_index(seq, math.e).value + 8
    assert sched[-1] == 100_000
    assert np.all(np.diff(sched) > 0)
    ratios = sched[1:] / sched[:-1]
    assert np.max(ratios) <= 2.0 + 1e-9


def test_lil_schedule_too_short():
    seq = normal_sequence(11, 20)
    with pytest.raises(ValueError):
        lil_schedule(seq, points=20)


def test_strassen_zero_paths():
    seq = build_lil_sequence(np.full(3000, 1.0), mu=1.0, s2_profile=1.0)
    sched = lil_schedule(seq, points=20)
    paths = [build_eta(seq, int(n), GRID) for n in sched]
    rep = strassen_check(paths)
    assert rep.sup_stat == 0.0
    assert rep.tail_endpoint_stat == 0.0
    assert rep.envelope_energy == 0.0


def test_strassen_needs_long_schedule():
    seq = normal_sequence(12, 3000)
    sched = lil_schedule(seq, points=20)[:10]
    paths = [build_eta(seq, int(n), GRID) for n in sched]
    with pytest.raises(ValueError):
        strassen_check(paths)


def test_calibration_band_contains_typical_draw():
    seq = normal_sequence(13, 100_000)
    sched = lil_schedule(seq, points=20)
    band = calibrate_lil_band(sched, 200, seed=99)
    te = band["tail_endpoint"]
    assert 0.0 < te["lo"] < te["q50"] < te["hi"] < 2.0
    # an independent normal draw lands inside the min/max band
    paths = [build_eta(seq, int(n), GRID) for n in sched]
    rep = strassen_check(paths)
    assert te["lo"] <= rep.tail_endpoint_stat <= te["hi"]
    assert band["sup_norm"]["lo"] <= rep.sup_stat <= band["sup_norm"]["hi"]


def test_partial_sum_variance_profile_converges(linear_estimate):
    """Cross-replication second moment of S_n at n = 10^4 reaches the linear
    model's long-run variance within 10%."""
    counts = linear_estimate["counts"].astype(float)
    n = 10_000
    blocks = counts.shape[1] // n
    x = counts[:, : blocks * n].reshape(counts.shape[0] * blocks, n) - 2.0
    s_n = x.sum(axis=1)
    s2_emp = float(np.mean(s_n**2)) / n
    assert abs(s2_emp - 8.0) <= 0.1 * 8.0


def test_lil_stage_empirical_profile():
    """The cross-replication profile mode produces a monotone profile and
    finite statistics when replications dominate the index range."""
    from hawkeslab.config import RunConfig
    from hawkeslab import pipelines
    from hawkeslab.model import Kernel, RateFunction, validate_model

    model = validate_model(Kernel.zero(), RateFunction.linear(2.0))
    cfg = RunConfig(kernel_family="zero", kernel_params={}, rate_family="linear",
                    rate_params={"nu": 2.0}, lil_n_max=40, lil_replications=4000,
                    lil_s2_mode="empirical", lil_oracle_replications=50, seed=17)
    stage = pipelines.lil_stage(model, cfg, mu=2.0, sigma2=2.0, workers=1)
    profile = stage["s2_profile"]
    assert np.all(np.diff(profile) > 0.0)
    # profile tracks n * variance: rate-2 unit bins have variance 2
    assert profile[-1] / 40 == pytest.approx(2.0, rel=0.1)
    assert all(math.isfinite(r.tail_endpoint_stat) for r in stage["reports"])


def test_lil_stage_empirical_needs_replications():
    from hawkeslab.config import RunConfig
    from hawkeslab import pipelines
    from hawkeslab.model import Kernel, RateFunction, validate_model

    model = validate_model(Kernel.zero(), RateFunction.linear(2.0))
    cfg = RunConfig(kernel_family="zero", kernel_params={}, rate_family="linear",
                    rate_params={"nu": 2.0}, lil_n_max=40, lil_replications=1,
                    lil_s2_mode="empirical", seed=17)
    with pytest.raises(ValueError):
        pipelines.lil_stage(model, cfg, mu=2.0, sigma2=2.0, workers=1)


def test_million_step_normal_oracle_statistic():
    """Classical iid-normal simulation at n up to 10^6: the late-schedule
    endpoint statistic sits inside the oracle band computed at the same n."""
    seq = normal_sequence(14, 1_000_000)
    sched = lil_schedule(seq, points=20)
    paths = [build_eta(seq, int(n), np.array([0.0, 1.0])) for n in sched]
    rep = strassen_check(paths)
    band = calibrate_lil_band(sched, 200, seed=15)["tail_endpoint"]
    assert band["lo"] <= rep.tail_endpoint_stat <= band["hi"]
    assert rep.tail_endpoint_stat < 1.6
