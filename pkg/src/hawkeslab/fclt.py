"""Rescaled count paths and Gaussian-limit checks.

A centered path samples (N(0, s*t] - mu*s*t) / sqrt(t) on a uniform grid of
s in [0, 1]; a compensated path replaces the linear centering with the
integrated intensity.  At large t the centered paths behave like a Brownian
motion scaled by the long-run standard deviation, and the compensated paths
like one scaled by the square root of the mean rate.

The checks work on finite-dimensional marginals plus jump control: marginal
distribution fits use the empirical-CDF sup distance against the target
normal, increments over disjoint sub-intervals are tested for vanishing
correlation, and endpoint variances are compared with their targets on a
3-standard-error band.  Grid sampling is justified because the limit is
continuous and a single event moves a path by only 1/sqrt(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

DEFAULT_GRID_POINTS = 101
DEFAULT_SIGNIFICANCE = 0.01


@dataclass(frozen=True)
class RescaledPath:
    grid: np.ndarray     # s values, uniform on [0, 1]
    values: np.ndarray   # (count(0, s*t] - mu*s*t) / sqrt(t)
    t_scale: float

    @property
    def max_jump(self) -> float:
        """Size of a single-event jump; controls the interpolation error."""
        return 1.0 / math.sqrt(self.t_scale)


@dataclass(frozen=True)
class CompensatedPath:
    grid: np.ndarray
    values: np.ndarray   # (count(0, s*t] - lambda_integral(s*t)) / sqrt(t)
    t_scale: float

    @property
    def max_jump(self) -> float:
        return 1.0 / math.sqrt(self.t_scale)


@dataclass(frozen=True)
class GaussianTestReport:
    test_name: str
    statistic: float
    p_value: float
    n_samples: int
    pass_flag: bool

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value must lie in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "test_name": self.test_name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n_samples": self.n_samples,
            "pass": self.pass_flag,
        }


def _counts_on_grid(times: np.ndarray, grid_times: np.ndarray) -> np.ndarray:
    lo = np.searchsorted(times, 0.0, side="right")
    return np.searchsorted(times, grid_times, side="right") - lo


def build_rescaled(events, mu: float, t: float, g: int = DEFAULT_GRID_POINTS) -> RescaledPath:
    """Centered, diffusively rescaled count path on g grid points.

    ``events`` is an EventSequence or a sorted array of event times; counting
    starts strictly after 0.
    """
    if t <= 0.0:
        raise ValueError("horizon t must be > 0")
    if g < 2:
        raise ValueError("need at least two grid points")
    times = np.asarray(getattr(events, "times", events), dtype=float)
    horizon = getattr(events, "horizon", None)
    if horizon is not None and horizon + 1e-9 < t:
        raise ValueError(f"event horizon {horizon:g} shorter than path scale {t:g}")
    grid = np.linspace(0.0, 1.0, int(g))
    counts = _counts_on_grid(times, grid * t)
    values = (counts - mu * grid * t) / math.sqrt(t)
    return RescaledPath(grid=grid, values=values, t_scale=float(t))


def build_compensated(events, lambda_integral, t: float,
                      g: int = DEFAULT_GRID_POINTS) -> CompensatedPath:
    """Martingale path: counts minus the integrated intensity at the grid.

    ``lambda_integral`` must hold the compensator at the same g uniform grid
    times s*t (see simulate.compensator_at).
    """
    if t <= 0.0:
        raise ValueError("horizon t must be > 0")
    lam = np.asarray(lambda_integral, dtype=float)
    if lam.size != int(g):
        raise ValueError("lambda_integral length must match the grid size")
    times = np.asarray(getattr(events, "times", events), dtype=float)
    grid = np.linspace(0.0, 1.0, int(g))
    counts = _counts_on_grid(times, grid * t)
    values = (counts - lam) / math.sqrt(t)
    return CompensatedPath(grid=grid, values=values, t_scale=float(t))


def _values_at(paths, s: float) -> np.ndarray:
    grid = paths[0].grid
    idx = int(np.argmin(np.abs(grid - s)))
    if abs(grid[idx] - s) > 1e-9:
        raise ValueError(f"s={s:g} is not a grid point of the paths")
    return np.array([p.values[idx] for p in paths])


def test_marginal_normality(paths, s: float, sigma2: float,
                            significance: float = DEFAULT_SIGNIFICANCE) -> GaussianTestReport:
    """Fit of the path marginal at s against Normal(0, sigma2 * s)."""
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be > 0")
    if not 0.0 < s <= 1.0:
        raise ValueError("s must lie in (0, 1]")
    if len(paths) < 200:
        raise ValueError("need at least 200 paths")
    samples = _values_at(paths, s)
    d, p = stats.kstest(samples, "norm", args=(0.0, math.sqrt(sigma2 * s)))
    return GaussianTestReport("marginal_normality", float(d), float(p),
                              len(samples), bool(p >= significance))


def test_increment_independence(paths, s_points,
                                significance: float = DEFAULT_SIGNIFICANCE) -> GaussianTestReport:
    """Largest pairwise correlation among disjoint path increments.

    The statistic is compared against its null scale 1/sqrt(n - 3) with a
    Bonferroni correction over the pairs.
    """
    s_points = np.asarray(s_points, dtype=float)
    if s_points.size < 2:
        raise ValueError("need at least two increments")
    if np.any(np.diff(s_points) <= 0.0) or s_points[0] <= 0.0 or s_points[-1] > 1.0:
        raise ValueError("s_points must be strictly increasing in (0, 1]")
    n = len(paths)
    if n < 500:
        raise ValueError("need at least 500 paths")
    levels = np.stack([_values_at(paths, s) for s in s_points], axis=1)
    increments = np.diff(np.concatenate([np.zeros((n, 1)), levels], axis=1), axis=1)
    corr = np.corrcoef(increments, rowvar=False)
    k = s_points.size
    off = corr[np.triu_indices(k, 1)]
    stat = float(np.max(np.abs(off)))
    n_pairs = k * (k - 1) // 2
    p_single = 2.0 * stats.norm.sf(stat * math.sqrt(n - 3))
    p = float(min(1.0, n_pairs * p_single))
    return GaussianTestReport("increment_independence", stat, p, n, bool(p >= significance))


def _variance_z(samples: np.ndarray, target: float):
    n = samples.size
    var = float(np.var(samples, ddof=1))
    se = var * math.sqrt(2.0 / (n - 1))
    return var, (var - target) / se


def test_compensated_variance(paths, mu: float) -> GaussianTestReport:
    """Endpoint variance of compensated paths against the mean rate (3 SE band)."""
    if len(paths) < 200:
        raise ValueError("need at least 200 paths")
    endpoints = _values_at(paths, 1.0)
    var, z = _variance_z(endpoints, mu)
    p = float(2.0 * stats.norm.sf(abs(z)))
    return GaussianTestReport("compensated_variance", float(z), p,
                              endpoints.size, bool(abs(z) <= 3.0))


def variance_scaling_check(paths, s_points, sigma2: float) -> GaussianTestReport:
    """Path variance proportional to s: each grid point within 3 SE of sigma2*s."""
    s_points = np.asarray(s_points, dtype=float)
    zs = []
    for s in s_points:
        samples = _values_at(paths, s)
        _, z = _variance_z(samples, sigma2 * s)
        zs.append(abs(z))
    stat = float(max(zs))
    p_single = 2.0 * stats.norm.sf(stat)
    p = float(min(1.0, s_points.size * p_single))
    return GaussianTestReport("variance_scaling", stat, p, len(paths), bool(stat <= 3.0))


def endpoint_variance(paths) -> tuple[float, float]:
    """Sample variance of the endpoint with its normal-approximation SE."""
    endpoints = _values_at(paths, 1.0)
    var = float(np.var(endpoints, ddof=1))
    se = var * math.sqrt(2.0 / (endpoints.size - 1))
    return var, se
