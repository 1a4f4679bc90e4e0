"""Interpolated partial-sum paths and iterated-logarithm diagnostics.

Centered unit-bin counts are cumulated into partial sums S_n with a variance
profile s_n^2; the normalized path eta_n linearly interpolates the points
(s_k^2 / s_n^2, S_k) and divides by sqrt(2 s_n^2 loglog s_n^2).  For large n
these paths cluster inside the unit-energy ball of absolutely continuous
functions, so their sup norms and endpoints settle near 1 from below.

Convergence here is notoriously slow, so no fixed finite-n threshold is
honest.  Acceptance bands are instead calibrated by a synthetic oracle: iid
standard normal increments with profile s_n^2 = n, evaluated on the same
schedule of n values, which shares the finite-n behaviour of the statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_E = math.e


@dataclass(frozen=True)
class LilSequence:
    """Centered counts x (X_1..X_n), partial sums and variance profile.

    ``s_partial[k]`` holds S_k for k = 0..n_max (with S_0 = 0) and ``s2[k]``
    the profile value for the same index; ``x[k-1]`` is X_k.
    """

    x: np.ndarray
    s_partial: np.ndarray
    s2: np.ndarray
    n_max: int


@dataclass(frozen=True)
class LilPath:
    n: int
    grid: np.ndarray
    values: np.ndarray
    norm_sup: float  # exact sup over the interpolation knots

    @property
    def endpoint(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class GIndex:
    threshold: float
    value: int


@dataclass(frozen=True)
class LilReport:
    sup_stat: float            # max over the schedule of the path sup norms
    tail_endpoint_stat: float  # max |endpoint| over the schedule tail
    envelope_energy: float     # discrete energy of the pointwise-max path
    n_values: np.ndarray
    endpoints: np.ndarray
    norm_sups: np.ndarray
    tail_n_values: np.ndarray


def build_lil_sequence(counts, mu: float, s2_profile) -> LilSequence:
    """Center counts, cumulate, and attach a variance profile.

    ``s2_profile`` is either a positive scalar sigma2 (plug-in profile
    s_n^2 = n * sigma2) or an explicit array of profile values for
    n = 1..n_max (or 0..n_max); the profile must be strictly increasing.
    """
    arr = np.asarray(getattr(counts, "counts", counts), dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("counts must be a nonempty 1-d array")
    n_max = arr.size
    x = arr - float(mu)
    s_partial = np.concatenate([[0.0], np.cumsum(x)])

    if np.isscalar(s2_profile):
        if s2_profile <= 0.0:
            raise ValueError("plug-in variance must be > 0")
        s2 = float(s2_profile) * np.arange(n_max + 1, dtype=float)
    else:
        prof = np.asarray(s2_profile, dtype=float)
        if prof.size == n_max:
            s2 = np.concatenate([[0.0], prof])
        elif prof.size == n_max + 1:
            s2 = prof.copy()
        else:
            raise ValueError("profile length must be n_max or n_max + 1")
        if s2[0] != 0.0:
            raise ValueError("profile must start at 0")
    if np.any(np.diff(s2) <= 0.0):
        raise ValueError("variance profile must be strictly increasing")
    return LilSequence(x=x, s_partial=s_partial, s2=s2, n_max=n_max)


def g_index(seq_or_s2, threshold: float) -> GIndex:
    """Largest n with s_n^2 <= threshold (0 when even s_1^2 exceeds it)."""
    s2 = seq_or_s2.s2 if isinstance(seq_or_s2, LilSequence) else np.asarray(seq_or_s2, dtype=float)
    if threshold < 0.0:
        raise ValueError("threshold must be >= 0")
    value = int(np.searchsorted(s2, threshold, side="right") - 1)
    return GIndex(threshold=float(threshold), value=value)


def _denominator(s2n: float) -> float:
    return math.sqrt(2.0 * s2n * math.log(math.log(s2n)))


def build_eta(seq: LilSequence, n: int, grid) -> LilPath:
    """Normalized interpolated path at index n on a grid spanning [0, 1].

    Knot k sits at abscissa s_k^2 / s_n^2 with ordinate S_k / denom, and the
    path is linear in between.  Requires s_n^2 > e so the loglog factor is
    positive (n must exceed g(e)).
    """
    if not 1 <= n <= seq.n_max:
        raise ValueError("n out of range")
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or grid[0] != 0.0 or grid[-1] != 1.0 or np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must increase from 0 to 1")
    s2n = float(seq.s2[n])
    if s2n <= _E:
        raise ValueError(f"n={n} is not beyond g(e); loglog normalization undefined")
    denom = _denominator(s2n)

    pos = s2n * grid
    k = np.searchsorted(seq.s2[: n + 1], pos, side="right") - 1
    k = np.clip(k, 0, n - 1)
    gaps = seq.s2[k + 1] - seq.s2[k]
    values = (seq.s_partial[k] + (pos - seq.s2[k]) / gaps * seq.x[k]) / denom
    norm_sup = float(np.max(np.abs(seq.s_partial[: n + 1]))) / denom
    return LilPath(n=int(n), grid=grid, values=values, norm_sup=norm_sup)


def lil_schedule(seq_or_s2, points: int = 20) -> np.ndarray:
    """Geometric schedule of indices from just beyond g(e)+8 up to n_max.

    The ratio adapts so the requested number of distinct indices fits below
    n_max (ratio 2 when room allows, smaller otherwise).
    """
    s2 = seq_or_s2.s2 if isinstance(seq_or_s2, LilSequence) else np.asarray(seq_or_s2, dtype=float)
    n_max = s2.size - 1
    start = g_index(s2, _E).value + 9
    if start >= n_max:
        raise ValueError("profile too short: no room beyond g(e)+8")
    if n_max - start + 1 < points:
        raise ValueError(f"cannot place {points} distinct indices in [{start}, {n_max}]")
    ratio = min(2.0, (n_max / start) ** (1.0 / (points - 1)))
    raw = start * ratio ** np.arange(points)
    ns = np.unique(np.round(raw).astype(int))
    ns = ns[(ns >= start) & (ns <= n_max)]
    ns = np.unique(np.append(ns, n_max))
    # top up after rounding collisions
    candidate = start
    while ns.size < points:
        if candidate not in ns:
            ns = np.sort(np.append(ns, candidate))
        candidate += 1
    return ns


def strassen_check(paths, tail_count: int | None = None) -> LilReport:
    """Sup-norm and endpoint statistics over a schedule of paths.

    The sup statistic is the largest path sup norm on the schedule; the tail
    statistic is the largest absolute endpoint over the late part of the
    schedule (default: last quarter, at least 3).  The envelope energy is the
    discrete Dirichlet energy of the pointwise maximum of the paths, a purely
    diagnostic summary of how the cluster fills the limit ball.
    """
    if len(paths) < 20:
        raise ValueError("need a schedule of at least 20 paths")
    paths = sorted(paths, key=lambda p: p.n)
    grid = paths[0].grid
    for p in paths:
        if p.grid.shape != grid.shape or np.any(p.grid != grid):
            raise ValueError("paths must share a common grid")
    if tail_count is None:
        tail_count = max(3, len(paths) // 4)
    tail = paths[-tail_count:]

    n_values = np.array([p.n for p in paths])
    endpoints = np.array([p.endpoint for p in paths])
    norm_sups = np.array([p.norm_sup for p in paths])

    envelope = np.max(np.stack([p.values for p in paths]), axis=0)
    slopes = np.diff(envelope) / np.diff(grid)
    energy = float(np.sum(slopes**2 * np.diff(grid)))

    return LilReport(
        sup_stat=float(norm_sups.max()),
        tail_endpoint_stat=float(np.max(np.abs([p.endpoint for p in tail]))),
        envelope_energy=energy,
        n_values=n_values,
        endpoints=endpoints,
        norm_sups=norm_sups,
        tail_n_values=np.array([p.n for p in tail]),
    )


def calibrate_lil_band(schedule, oracle_replications: int, seed,
                       tail_count: int | None = None) -> dict:
    """Distribution of the schedule statistics under iid normal increments.

    Simulates ``oracle_replications`` sequences of iid standard normals with
    the exact profile s_n^2 = n, evaluates the same schedule, and returns the
    observed range and inner quantiles of the tail-endpoint and sup-norm
    statistics.  The returned band is what a correctly scaled process should
    land in at these (finite) n.
    """
    schedule = np.asarray(schedule, dtype=int)
    if schedule.size < 2:
        raise ValueError("schedule too short to calibrate")
    n_max = int(schedule.max())
    if schedule.min() <= math.ceil(_E):
        raise ValueError("oracle profile s_n^2 = n needs schedule indices beyond e")
    if tail_count is None:
        tail_count = max(3, schedule.size // 4)
    rng = np.random.default_rng(seed)
    denom = np.sqrt(2.0 * schedule * np.log(np.log(schedule.astype(float))))

    tail_stats = np.empty(oracle_replications)
    sup_stats = np.empty(oracle_replications)
    for r in range(oracle_replications):
        s = np.concatenate([[0.0], np.cumsum(rng.standard_normal(n_max))])
        endpoints = s[schedule] / denom
        cummax = np.maximum.accumulate(np.abs(s))
        sup_stats[r] = float(np.max(cummax[schedule] / denom))
        tail_stats[r] = float(np.max(np.abs(endpoints[-tail_count:])))

    def band(v):
        return {
            "lo": float(v.min()),
            "hi": float(v.max()),
            "q01": float(np.quantile(v, 0.01)),
            "q50": float(np.quantile(v, 0.50)),
            "q99": float(np.quantile(v, 0.99)),
        }

    return {
        "oracle_replications": int(oracle_replications),
        "tail_count": int(tail_count),
        "tail_endpoint": band(tail_stats),
        "sup_norm": band(sup_stats),
    }
