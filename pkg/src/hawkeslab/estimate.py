"""Estimators for the limit constants of unit-bin count series.

The long-run variance of the counts is estimated two independent ways:

* a truncated autocovariance series: gamma_0 + 2 * sum of gamma_j up to a
  data-driven lag, with autocovariances pooled across replications under the
  divide-by-length normalization (biased but consistent, and guaranteed
  positive semidefinite);
* non-overlapping batch means as a cross-check.

Both come with Monte Carlo standard errors from the cross-replication spread.
The linear-model closed forms (mean nu/(1-m), variance nu/(1-m)^3 with m the
kernel mass) are provided as an exact oracle, and a tail diagnostic reports
the empirical moment generating function and fitted log-survival slope of the
pooled counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateVarianceError, StabilityError
from .model import HawkesModel
from .simulate import EventSequence

BIN_WIDTH = 1.0  # unit bins throughout; estimators are defined on N(j, j+1]


@dataclass(frozen=True)
class CountSeries:
    """Unit-bin counts N(start + j, start + j + 1], j = 0..m-1."""

    counts: np.ndarray
    start: float = 0.0
    bin_width: float = BIN_WIDTH

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("counts must be a nonempty 1-d array")
        if np.any(arr < 0):
            raise ValueError("counts must be nonnegative")
        if self.bin_width != BIN_WIDTH:
            raise ValueError("bin width is fixed at 1 time unit")
        arr = arr.astype(np.int64, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)


@dataclass(frozen=True)
class TruncationPolicy:
    """Lag-selection rule for the autocovariance series.

    ``auto``: keep lags up to the first lag where three consecutive estimates
    fall below twice their standard error, capped at ``max_lag``.
    ``fixed``: always use ``fixed_lag``.
    """

    mode: str = "auto"
    max_lag: int = 50
    fixed_lag: int | None = None

    def __post_init__(self):
        if self.mode not in ("auto", "fixed"):
            raise ValueError("truncation mode must be 'auto' or 'fixed'")
        if self.mode == "fixed" and (self.fixed_lag is None or self.fixed_lag < 1):
            raise ValueError("fixed mode needs fixed_lag >= 1")
        if self.max_lag < 1:
            raise ValueError("max_lag must be >= 1")


@dataclass(frozen=True)
class PathStatistics:
    mu_hat: float
    gamma_hat: np.ndarray        # autocovariances, lags 0..L
    sigma2_series: float
    sigma2_batch: float
    truncation_lag: int
    batch_width: int
    standard_errors: dict        # mu_hat, sigma2_series, sigma2_batch, gamma_hat (array)
    n_replications: int
    bins_per_replication: int


@dataclass(frozen=True)
class TailDiagnostic:
    theta_grid: np.ndarray
    empirical_mgf: np.ndarray
    mgf_se: np.ndarray
    log_survival_slope: float
    slope_se: float
    consistent_with_exponential_tail: bool
    inconclusive: bool


def default_truncation_cap(model: HawkesModel) -> int:
    """Lag cap from the geometric decay ratio of the coupling bound."""
    r = model.rate.lipschitz * model.kernel.l1_norm
    if r <= 0.0:
        return 1
    return max(1, math.ceil(10.0 / (-math.log(r))))


def bin_counts(events: EventSequence, start: float, m: int) -> CountSeries:
    """Counts over the m unit bins (start + j, start + j + 1]."""
    if m < 1:
        raise ValueError("need at least one bin")
    if start < 0.0:
        raise ValueError("start must be >= 0")
    if start + m > events.horizon + 1e-9:
        raise ValueError(
            f"horizon {events.horizon:g} too short for {m} bins from {start:g}"
        )
    edges = start + np.arange(m + 1, dtype=float)
    idx = np.searchsorted(events.times, edges, side="right")
    return CountSeries(counts=np.diff(idx), start=float(start))


def _as_matrix(series) -> np.ndarray:
    """Stack replications into an (R, m) float matrix; lengths must agree."""
    rows = []
    for s in series:
        rows.append(s.counts if isinstance(s, CountSeries) else np.asarray(s))
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError("replications must have equal length")
    return np.asarray(rows, dtype=float)


def _pseudo_replications(matrix: np.ndarray, pieces: int = 8) -> np.ndarray:
    """Split a single series into contiguous chunks so spread-based SEs exist."""
    m = matrix.shape[1]
    chunk = m // pieces
    if chunk < 16:
        raise ValueError("series too short to estimate standard errors")
    return matrix[0, : chunk * pieces].reshape(pieces, chunk)


def estimate_sigma2(series, truncation: TruncationPolicy = TruncationPolicy()) -> PathStatistics:
    """Mean, autocovariances, and long-run variance of pooled count series.

    ``series`` is a list of CountSeries (or 1-d arrays), one per replication,
    all of equal length.  Raises DegenerateVarianceError when the truncated
    series estimate is <= 0, which a healthy stationary model cannot produce.
    """
    matrix = _as_matrix(series)
    n_rep, m = matrix.shape
    lag_cap = truncation.max_lag if truncation.mode == "auto" else truncation.fixed_lag
    n_lags = min(lag_cap + 3, m - 1)
    if n_rep * m < 10 * max(1, lag_cap):
        raise ValueError("total sample length must be >= 10x the candidate truncation lag")

    mu_hat = float(matrix.mean())
    dev = matrix - mu_hat

    spread = dev if n_rep > 1 else _pseudo_replications(dev)

    # Per-replication biased autocovariances (divide by length, every lag),
    # then the pooled value is their mean: positive semidefinite by
    # construction and identical to pooling products over all replications.
    def acov_rows(rows, lags):
        cols = []
        mm = rows.shape[1]
        for j in range(lags + 1):
            prod = rows[:, : mm - j] * rows[:, j:]
            cols.append(prod.sum(axis=1) / mm)
        return np.stack(cols, axis=1)  # (R, lags+1)

    gamma_rep = acov_rows(dev, n_lags)
    gamma_hat = gamma_rep.mean(axis=0)
    gamma_spread = gamma_rep if n_rep > 1 else acov_rows(spread, min(n_lags, spread.shape[1] - 1))
    k = gamma_spread.shape[0]
    gamma_se = gamma_spread.std(axis=0, ddof=1) / math.sqrt(k)
    if gamma_se.size < n_lags + 1:  # pseudo-replication path with short chunks
        gamma_se = np.pad(gamma_se, (0, n_lags + 1 - gamma_se.size), constant_values=gamma_se[-1])

    if truncation.mode == "fixed":
        lag = min(truncation.fixed_lag, n_lags)
    else:
        lag = lag_cap
        small = np.abs(gamma_hat[1:]) < 2.0 * gamma_se[1:]
        for j in range(1, n_lags - 1):
            if small[j - 1] and small[j] and small[j + 1]:
                lag = j
                break
        lag = max(1, min(lag, lag_cap, n_lags))

    sigma2_rep = gamma_rep[:, 0] + 2.0 * gamma_rep[:, 1 : lag + 1].sum(axis=1)
    sigma2_series = float(sigma2_rep.mean())
    if n_rep > 1:
        se_series = float(sigma2_rep.std(ddof=1) / math.sqrt(n_rep))
    else:
        s2s = gamma_spread[:, 0] + 2.0 * gamma_spread[:, 1 : lag + 1].sum(axis=1)
        se_series = float(s2s.std(ddof=1) / math.sqrt(k))

    if sigma2_series <= 0.0:
        raise DegenerateVarianceError(
            f"truncated long-run variance {sigma2_series:.6g} <= 0; "
            "data is degenerate or far too short"
        )

    # Batch means cross-check: square-root batch width balances the O(1/w)
    # correlation bias against the O(sqrt(w/m)) noise at desk-scale budgets.
    width = max(1, math.ceil(math.sqrt(m)))
    n_batches = m // width
    if n_batches < 2:
        raise ValueError("series too short for batch means")
    folded = matrix[:, : n_batches * width].reshape(n_rep, n_batches, width)
    batch_means = folded.mean(axis=2)
    total_batches = n_rep * n_batches
    sigma2_batch = float(width * np.sum((batch_means - mu_hat) ** 2) / (total_batches - 1))
    if n_rep > 1:
        per_rep_batch = width * ((batch_means - mu_hat) ** 2).sum(axis=1) / (n_batches - 1)
        se_batch = float(per_rep_batch.std(ddof=1) / math.sqrt(n_rep))
    else:
        se_batch = float(sigma2_batch * math.sqrt(2.0 / (total_batches - 1)))

    se_mu = float(sigma2_series / max(n_rep * m, 1)) ** 0.5

    return PathStatistics(
        mu_hat=mu_hat,
        gamma_hat=gamma_hat,
        sigma2_series=sigma2_series,
        sigma2_batch=sigma2_batch,
        truncation_lag=int(lag),
        batch_width=int(width),
        standard_errors={
            "mu_hat": se_mu,
            "sigma2_series": se_series,
            "sigma2_batch": se_batch,
            "gamma_hat": gamma_se,
        },
        n_replications=n_rep,
        bins_per_replication=m,
    )


def linear_oracle(nu: float, l1: float) -> tuple[float, float]:
    """Exact limit constants of the linear model: mean and long-run variance."""
    if nu <= 0.0:
        raise ValueError("nu must be > 0")
    if not 0.0 <= l1 < 1.0:
        raise StabilityError(f"kernel mass {l1:g} must lie in [0, 1) for a stable linear model")
    return nu / (1.0 - l1), nu / (1.0 - l1) ** 3


def coupling_gap_bound(model: HawkesModel) -> float:
    """Geometric-series bound on the expected total count gap between the
    history-started and empty-started processes, per unit of history density:
    lipschitz * first_moment / stability_margin."""
    return model.rate.lipschitz * model.kernel.first_moment / model.stability_margin


def poisson_fit_chi2(counts: np.ndarray, rate: float, min_expected: float = 5.0):
    """Chi-square goodness-of-fit of pooled counts against Poisson(rate).

    Bins with expected frequency below ``min_expected`` are merged into the
    tail.  Returns (statistic, p_value, dof).
    """
    counts = np.asarray(counts).ravel()
    n = counts.size
    kmax = int(counts.max())
    observed = np.bincount(counts.astype(int), minlength=kmax + 1).astype(float)
    expected = n * stats.poisson.pmf(np.arange(kmax + 1), rate)
    # fold the open tail into the last cell
    expected[-1] += n * stats.poisson.sf(kmax, rate)

    # merge sparse cells from the right, then from the left
    while expected.size > 2 and expected[-1] < min_expected:
        expected[-2] += expected[-1]
        observed[-2] += observed[-1]
        expected, observed = expected[:-1], observed[:-1]
    while expected.size > 2 and expected[0] < min_expected:
        expected[1] += expected[0]
        observed[1] += observed[0]
        expected, observed = expected[1:], observed[1:]

    statistic = float(np.sum((observed - expected) ** 2 / expected))
    dof = expected.size - 1
    p = float(stats.chi2.sf(statistic, dof))
    return statistic, p, dof


def tail_diagnostic(series, theta_grid=None) -> TailDiagnostic:
    """Empirical MGF and log-survival slope of the pooled counts.

    The diagnostic can support, but never verify, finiteness of the count
    MGF: it reports whether the observed tail is consistent with an
    exponential envelope (fitted slope negative with its confidence interval
    excluding zero).
    """
    if theta_grid is None:
        theta_grid = np.array([0.05, 0.1, 0.2, 0.4])
    theta_grid = np.asarray(theta_grid, dtype=float)
    if np.any(theta_grid <= 0.0):
        raise ValueError("theta grid must be positive")

    pooled = np.concatenate([np.asarray(s.counts if isinstance(s, CountSeries) else s).ravel()
                             for s in series]).astype(float)
    n = pooled.size
    if n < 10_000:
        raise ValueError("tail diagnostic needs at least 10^4 pooled counts")

    mgf = np.empty(theta_grid.size)
    mgf_se = np.empty(theta_grid.size)
    for i, theta in enumerate(theta_grid):
        w = np.exp(theta * pooled)
        mgf[i] = w.mean()
        mgf_se[i] = w.std(ddof=1) / math.sqrt(n)

    if pooled.max() == pooled.min():
        return TailDiagnostic(theta_grid, mgf, mgf_se, float("nan"), float("nan"),
                              consistent_with_exponential_tail=False, inconclusive=True)

    # survival on integer thresholds; keep the observed tail where at least
    # 10 exceedances remain so log-survival is stable
    kmax = int(pooled.max())
    xs = np.arange(kmax)
    surv = np.array([np.mean(pooled > x) for x in xs])
    keep = (surv > 0) & (surv * n >= 10) & (surv <= 0.5)
    if keep.sum() < 3:
        keep = (surv > 0) & (surv * n >= 10)
    if keep.sum() < 2:
        return TailDiagnostic(theta_grid, mgf, mgf_se, float("nan"), float("nan"),
                              consistent_with_exponential_tail=False, inconclusive=True)
    fit = stats.linregress(xs[keep], np.log(surv[keep]))
    slope, slope_se = float(fit.slope), float(fit.stderr)
    consistent = bool(slope + 2.0 * slope_se < 0.0)
    return TailDiagnostic(theta_grid, mgf, mgf_se, slope, slope_se,
                          consistent_with_exponential_tail=consistent, inconclusive=False)
