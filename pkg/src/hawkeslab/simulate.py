"""Exact thinning simulation, monotone coupling, and compensator evaluation.

The simulator draws candidate points from a piecewise-constant dominating
intensity and accepts each with probability lam_t / bound.  Validity of the
bound rests on the certified model structure: the kernel is non-increasing
and the rate non-decreasing, so between events the conditional intensity can
only fall.  The bound is re-tightened at every candidate, and the engine
asserts (rather than assumes) that the realized intensity never exceeds it.

Excitation bookkeeping is O(1) per candidate for exponential kernels (the
excitation sum obeys an exact decay recursion; no event is ever dropped) and
O(n) for power-law kernels.  Compensator increments between events are closed
form for exponential kernels and adaptive quadrature otherwise.

Randomness: one master seed; replication ``r`` of a batch uses the substream
``default_rng((master_seed, stream_tag, r))`` so that results are independent
of scheduling and worker count.  Stream tags for the pipeline stages live in
this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import ConfigError
from .model import HawkesModel, History, kernel_tail_first_moment, rate_eval

# Stream tags for substream derivation (see module docstring).
STREAM_SIMULATE = 0
STREAM_ESTIMATE = 1
STREAM_FCLT = 2
STREAM_LIL = 3
STREAM_COUPLING = 4
STREAM_ORACLE = 5

_BLOCK = 8192  # random draws are consumed from fixed-size blocks
_DEFAULT_GRID_POINTS = 101


def replication_rng(master_seed: int, stream: int, replication: int) -> np.random.Generator:
    """Independent, scheduling-invariant substream for one replication."""
    return np.random.default_rng((int(master_seed), int(stream), int(replication)))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class EventSequence:
    """Strictly increasing event times on (-history_depth, horizon].

    Times in (-history_depth, 0] form the history segment of the record;
    times in (0, horizon] are the observed window.
    """

    times: np.ndarray
    horizon: float
    history_depth: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.times, dtype=float)
        if arr.size > 1 and np.any(np.diff(arr) <= 0.0):
            raise ValueError("event times must be strictly increasing")
        if arr.size and (arr[-1] > self.horizon or arr[0] <= -self.history_depth - 1e-12):
            raise ValueError("event times must lie in (-history_depth, horizon]")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "times", arr)

    @property
    def window_times(self) -> np.ndarray:
        """Event times strictly after 0."""
        return self.times[np.searchsorted(self.times, 0.0, side="right"):]

    def count(self, a: float, b: float) -> int:
        """Number of events in (a, b]."""
        lo = np.searchsorted(self.times, a, side="right")
        hi = np.searchsorted(self.times, b, side="right")
        return int(hi - lo)


@dataclass(frozen=True)
class SimulationOutput:
    events: EventSequence
    grid_times: np.ndarray        # uniform grid on [0, horizon]
    lambda_integral: np.ndarray   # compensator at grid_times; starts at 0, non-decreasing
    intensity_at_events: np.ndarray  # left limit of the intensity at each accepted event


@dataclass(frozen=True)
class CoupledPair:
    """Empty-history process and history-augmented process driven by shared randomness.

    ``layers[i]`` is the recursion depth at which augmented event i enters the
    construction: 0 for events of the base process, n >= 1 for events created
    by the n-th excitation layer of the history.  Base events are exactly the
    layer-0 events, so base is a subset of augmented by construction.
    """

    base_events: EventSequence
    augmented_events: EventSequence
    layers: np.ndarray
    shared_seed: object
    max_layer: int
    truncated: bool  # a candidate needed a layer beyond max_layers and was dropped


# ----------------------------------------------------------------------------
# scalar rate helpers for the hot loops
# ----------------------------------------------------------------------------

def _rate_code(model: HawkesModel):
    """(family code, nu, alpha, cap) with a uniform signature for the engines."""
    r = model.rate
    nu = r.params["nu"]
    if r.family == "linear":
        return 0, nu, 1.0, 0.0
    if r.family == "saturating":
        return 1, nu, r.params["alpha"], 0.0
    return 2, nu, r.params["alpha"], r.params["cap"]


def _rate_scalar(fam: int, nu: float, al: float, cap: float, z: float) -> float:
    if fam == 0:
        return nu + z
    if fam == 1:
        return nu + al * z / (1.0 + z)
    return nu + al * (z if z < cap else cap)


def thinning_bound(model: HawkesModel, excitation_sum: float) -> float:
    """Dominating intensity valid from just after an event until the next one.

    ``excitation_sum`` is the kernel sum evaluated immediately after the most
    recent event; the kernel only decays afterwards and the rate is
    non-decreasing, so the rate at that excitation dominates.
    """
    if excitation_sum < 0.0:
        raise ValueError("excitation sum must be >= 0")
    return float(rate_eval(model.rate, excitation_sum))


# ----------------------------------------------------------------------------
# thinning engines
# ----------------------------------------------------------------------------

def _thin_exponential(model: HawkesModel, history: History, horizon: float, rng):
    """O(1)-state engine for exponential and zero kernels."""
    fam, nu, al, cap = _rate_code(model)
    if model.kernel.family == "zero":
        a, b = 0.0, 1.0
        s = 0.0
    else:
        a, b = model.kernel.params["a"], model.kernel.params["b"]
        s = float(np.sum(a * np.exp(b * history.times))) if history.times.size else 0.0

    exp = math.exp
    e_block = rng.standard_exponential(_BLOCK).tolist()
    u_block = rng.random(_BLOCK).tolist()
    i = 0
    t = 0.0
    times, lams = [], []
    while True:
        if i >= _BLOCK:
            e_block = rng.standard_exponential(_BLOCK).tolist()
            u_block = rng.random(_BLOCK).tolist()
            i = 0
        if fam == 0:
            bound = nu + s
        elif fam == 1:
            bound = nu + al * s / (1.0 + s)
        else:
            bound = nu + al * (s if s < cap else cap)
        t += e_block[i] / bound
        if t > horizon:
            break
        s *= exp(-b * (e_block[i] / bound))
        if fam == 0:
            lam = nu + s
        elif fam == 1:
            lam = nu + al * s / (1.0 + s)
        else:
            lam = nu + al * (s if s < cap else cap)
        if lam > bound * (1.0 + 1e-12):
            raise RuntimeError("dominating bound violated; monotonicity assumption broken")
        if u_block[i] * bound <= lam:
            times.append(t)
            lams.append(lam)
            s += a
        i += 1
    return np.asarray(times), np.asarray(lams)


def _thin_generic(model: HawkesModel, history: History, horizon: float, rng,
                  prune_threshold: float = 0.0):
    """O(n)-per-candidate engine for power-law kernels.

    ``prune_threshold`` > 0 drops past events once their current kernel value
    falls below the threshold.  Off by default: pruning introduces a small
    downward bias in the excitation and is only offered as a speed escape
    hatch.
    """
    fam, nu, al, cap = _rate_code(model)
    c = model.kernel.params["c"]
    p = model.kernel.params["p"]
    t0 = model.kernel.params["t0"]
    h0 = model.kernel.value_at_zero

    past = list(np.asarray(history.times, dtype=float))

    def excitation(at: float) -> float:
        if not past:
            return 0.0
        dt = at - np.asarray(past)
        return float(np.sum(c * (dt + t0) ** (-p)))

    e_block = rng.standard_exponential(_BLOCK).tolist()
    u_block = rng.random(_BLOCK).tolist()
    i = 0
    t = 0.0
    s_bound = excitation(0.0)
    times, lams = [], []
    while True:
        if i >= _BLOCK:
            e_block = rng.standard_exponential(_BLOCK).tolist()
            u_block = rng.random(_BLOCK).tolist()
            i = 0
        bound = _rate_scalar(fam, nu, al, cap, s_bound)
        t += e_block[i] / bound
        if t > horizon:
            break
        s = excitation(t)
        lam = _rate_scalar(fam, nu, al, cap, s)
        if lam > bound * (1.0 + 1e-12):
            raise RuntimeError("dominating bound violated; monotonicity assumption broken")
        if u_block[i] * bound <= lam:
            times.append(t)
            lams.append(lam)
            past.append(t)
            s_bound = s + h0
        else:
            s_bound = s
        if prune_threshold > 0.0 and past:
            dt = t - np.asarray(past)
            keep = c * (dt + t0) ** (-p) >= prune_threshold
            past = list(np.asarray(past)[keep])
        i += 1
    return np.asarray(times), np.asarray(lams)


def simulate(model: HawkesModel, history: History, horizon: float, seed,
             grid_points: int = _DEFAULT_GRID_POINTS,
             prune_threshold: float = 0.0) -> SimulationOutput:
    """Exact simulation on (0, horizon] given events at times <= 0.

    Deterministic given (model, history, horizon, seed).  ``seed`` may be an
    int, a tuple of ints (substream key) or a Generator.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be > 0")
    rng = _as_rng(seed)
    if model.kernel.family in ("exponential", "zero"):
        times, lams = _thin_exponential(model, history, horizon, rng)
    else:
        times, lams = _thin_generic(model, history, horizon, rng, prune_threshold)

    events = EventSequence(times=times, horizon=float(horizon))
    past = np.concatenate([history.times, times]) if history.times.size else times
    if grid_points >= 2:
        grid = np.linspace(0.0, horizon, int(grid_points))
        lam_int = compensator_at(model, past, grid)
        if lam_int[0] != 0.0 or np.any(np.diff(lam_int) < -1e-9):
            raise RuntimeError("compensator must start at 0 and be non-decreasing")
    else:  # grid_points=0 skips the compensator grid (internal fast path)
        grid = np.empty(0)
        lam_int = np.empty(0)
    if lams.size and np.min(lams) < model.rate.base * (1.0 - 1e-12):
        raise RuntimeError("intensity fell below the rate's base value")
    return SimulationOutput(events=events, grid_times=grid,
                            lambda_integral=lam_int, intensity_at_events=lams)


# ----------------------------------------------------------------------------
# compensator
# ----------------------------------------------------------------------------

def _segment_integral_exp(fam, nu, al, cap, b, s, d):
    """Integral of lam(s * e^{-b u}) du over u in [0, d], closed form per rate family."""
    if d <= 0.0:
        return 0.0
    decayed = s * math.exp(-b * d)
    if fam == 0:
        return nu * d + (s - decayed) / b
    if fam == 1:
        return nu * d + (al / b) * (math.log1p(s) - math.log1p(decayed))
    # clipped-linear: contribution is al*cap until the excitation crosses the
    # cap, then decays like the linear case from the crossing point.
    if s <= cap:
        return nu * d + al * (s - decayed) / b
    d_cross = math.log(s / cap) / b
    if d <= d_cross:
        return nu * d + al * cap * d
    rest = cap * (1.0 - math.exp(-b * (d - d_cross)))
    return nu * d + al * cap * d_cross + al * rest / b


def compensator_at(model: HawkesModel, event_times, query_times) -> np.ndarray:
    """Integrated intensity from 0 to each query time.

    ``event_times`` is the full sorted record (history at times <= 0 plus
    events in (0, T]); queries must be sorted and >= 0.  A query that
    coincides with an event time integrates up to that event only: the jump
    it causes affects the intensity strictly afterwards.
    """
    past = np.asarray(event_times, dtype=float)
    queries = np.asarray(query_times, dtype=float)
    if queries.size == 0:
        return np.empty(0)
    if np.any(queries < 0.0) or np.any(np.diff(queries) < 0.0):
        raise ValueError("query times must be sorted and >= 0")

    fam, nu, al, cap = _rate_code(model)
    out = np.empty(queries.size)

    if model.kernel.family == "zero":
        return nu * queries

    if model.kernel.family == "exponential":
        a, b = model.kernel.params["a"], model.kernel.params["b"]
        neg = past[past <= 0.0]
        s = float(np.sum(a * np.exp(b * neg))) if neg.size else 0.0
        pos = past[past > 0.0]
        t_cur, acc, j = 0.0, 0.0, 0
        for qi, q in enumerate(queries):
            while j < pos.size and pos[j] < q:
                d = pos[j] - t_cur
                acc += _segment_integral_exp(fam, nu, al, cap, b, s, d)
                s = s * math.exp(-b * d) + a
                t_cur = pos[j]
                j += 1
            acc_q = acc + _segment_integral_exp(fam, nu, al, cap, b, s, q - t_cur)
            out[qi] = acc_q
            # advance the walk state to q so later queries reuse the prefix
            s *= math.exp(-b * (q - t_cur))
            acc = acc_q
            t_cur = q
        return out

    # power-law: quadrature segment by segment between breakpoints
    c, p, t0 = (model.kernel.params[k] for k in ("c", "p", "t0"))

    def lam_of(u, contributors):
        z = float(np.sum(c * (u - contributors + t0) ** (-p))) if contributors.size else 0.0
        return _rate_scalar(fam, nu, al, cap, z)

    pos = past[past > 0.0]
    t_cur, acc, j = 0.0, 0.0, 0
    for qi, q in enumerate(queries):
        while j < pos.size and pos[j] < q:
            contributors = past[:np.searchsorted(past, pos[j])]
            val, _ = quad(lam_of, t_cur, pos[j], args=(contributors,),
                          epsabs=1e-8, epsrel=1e-10, limit=200)
            acc += val
            t_cur = pos[j]
            j += 1
        contributors = past[:np.searchsorted(past, q)]
        if q > t_cur:
            val, _ = quad(lam_of, t_cur, q, args=(contributors,),
                          epsabs=1e-8, epsrel=1e-10, limit=200)
            acc += val
            t_cur = q
        out[qi] = acc
    return out


def transformed_interarrivals(model: HawkesModel, event_times) -> np.ndarray:
    """Compensator increments between consecutive events after time 0.

    Includes the gap from 0 to the first event; the censored gap after the
    last event is excluded.  Under a correct model and compensator these are
    iid standard exponential.
    """
    past = np.asarray(event_times, dtype=float)
    pos = past[past > 0.0]
    if pos.size == 0:
        return np.empty(0)
    lam_int = compensator_at(model, past, pos)
    return np.diff(lam_int, prepend=0.0)


# ----------------------------------------------------------------------------
# monotone coupling via shared planar Poisson randomness
# ----------------------------------------------------------------------------

def simulate_coupled(model: HawkesModel, history: History, horizon: float, seed,
                     max_layers: int = 64) -> CoupledPair:
    """Couple the empty-history process with the history-started process.

    Both processes are measurable functions of one stream of candidate points
    (time, mark): a candidate at time t with mark u becomes an event of the
    recursion layer n when u falls between the layer n-1 and layer n intensity
    curves at t, where layer 0 ignores the history and every deeper layer adds
    the history excitation plus the events of the previous layer.  Layer
    curves are non-decreasing in n, so the assignment is the smallest n whose
    curve lies above the mark, and events only accumulate: the base process
    (layer 0) is a subset of the augmented process (all layers).

    Candidates whose assignment would exceed ``max_layers`` are dropped from
    the augmented process and the pair is flagged truncated (not fatal).
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be > 0")
    if max_layers < 0:
        raise ValueError("max_layers must be >= 0")
    rng = _as_rng(seed)
    fam, nu, al, cap = _rate_code(model)

    if model.kernel.family == "power-law":
        times, layers, truncated = _couple_generic(model, history, horizon, rng, max_layers)
    else:
        times, layers, truncated = _couple_exponential(model, history, horizon, rng, max_layers)

    times = np.asarray(times)
    layers = np.asarray(layers, dtype=int)
    base = times[layers == 0]
    return CoupledPair(
        base_events=EventSequence(times=base, horizon=float(horizon)),
        augmented_events=EventSequence(times=times, horizon=float(horizon)),
        layers=layers,
        shared_seed=seed,
        max_layer=int(layers.max()) if layers.size else 0,
        truncated=truncated,
    )


def _couple_exponential(model, history, horizon, rng, max_layers):
    fam, nu, al, cap = _rate_code(model)
    if model.kernel.family == "zero":
        a, b = 0.0, 1.0
        hist0 = 0.0
    else:
        a, b = model.kernel.params["a"], model.kernel.params["b"]
        hist0 = float(np.sum(a * np.exp(b * history.times))) if history.times.size else 0.0

    # excs[k] = excitation (decayed to the current position) from events of
    # layer <= k; hist = decayed history excitation.  Layer-n curve uses
    # excs[n-1] + hist for n >= 1 and excs[0]-without-history for n = 0.
    excs = [0.0]
    hist = hist0
    exp = math.exp
    e_block = rng.standard_exponential(_BLOCK).tolist()
    u_block = rng.random(_BLOCK).tolist()
    i = 0
    t = 0.0
    times, layers = [], []
    truncated = False
    while True:
        if i >= _BLOCK:
            e_block = rng.standard_exponential(_BLOCK).tolist()
            u_block = rng.random(_BLOCK).tolist()
            i = 0
        bound = _rate_scalar(fam, nu, al, cap, excs[-1] + hist)
        w = e_block[i] / bound
        t += w
        if t > horizon:
            break
        decay = exp(-b * w)
        hist *= decay
        for k in range(len(excs)):
            excs[k] *= decay
        if _rate_scalar(fam, nu, al, cap, excs[-1] + hist) > bound * (1.0 + 1e-12):
            raise RuntimeError("dominating bound violated; monotonicity assumption broken")
        u = u_block[i] * bound
        i += 1

        # smallest layer whose intensity curve exceeds the mark
        if u <= _rate_scalar(fam, nu, al, cap, excs[0]):
            layer = 0
        else:
            layer = -1
            top = len(excs)  # layers 1 .. top are distinguishable; beyond top they coincide
            for n in range(1, top + 1):
                if u <= _rate_scalar(fam, nu, al, cap, excs[n - 1] + hist):
                    layer = n
                    break
        if layer < 0:
            continue  # above every curve: not an event of any process
        if layer > max_layers:
            truncated = True
            continue
        times.append(t)
        layers.append(layer)
        if layer == len(excs):
            excs.append(excs[-1])
        for k in range(layer, len(excs)):
            excs[k] += a
    return times, layers, truncated


def _couple_generic(model, history, horizon, rng, max_layers):
    fam, nu, al, cap = _rate_code(model)
    c, p, t0 = (model.kernel.params[k] for k in ("c", "p", "t0"))
    h0 = model.kernel.value_at_zero
    hist_times = np.asarray(history.times, dtype=float)

    times: list = []
    layers: list = []
    truncated = False

    def hist_exc(at: float) -> float:
        if hist_times.size == 0:
            return 0.0
        return float(np.sum(c * (at - hist_times + t0) ** (-p)))

    def layer_excitations(at: float, top: int):
        """Cumulative excitation A_k(at) for k = 0..top from assigned events."""
        acc = np.zeros(top + 1)
        if times:
            dt = at - np.asarray(times)
            vals = c * (dt + t0) ** (-p)
            for v, ell in zip(vals, layers):
                acc[min(ell, top):] += v
        return acc

    e_block = rng.standard_exponential(_BLOCK).tolist()
    u_block = rng.random(_BLOCK).tolist()
    i = 0
    t = 0.0
    s_bound = hist_exc(0.0)
    while True:
        if i >= _BLOCK:
            e_block = rng.standard_exponential(_BLOCK).tolist()
            u_block = rng.random(_BLOCK).tolist()
            i = 0
        bound = _rate_scalar(fam, nu, al, cap, s_bound)
        t += e_block[i] / bound
        if t > horizon:
            break
        top = (max(layers) if layers else 0) + 1
        exc = layer_excitations(t, top)
        hexc = hist_exc(t)
        if _rate_scalar(fam, nu, al, cap, exc[-1] + hexc) > bound * (1.0 + 1e-12):
            raise RuntimeError("dominating bound violated; monotonicity assumption broken")
        u = u_block[i] * bound
        i += 1

        if u <= _rate_scalar(fam, nu, al, cap, exc[0]):
            layer = 0
        else:
            layer = -1
            for n in range(1, top + 1):
                if u <= _rate_scalar(fam, nu, al, cap, exc[n - 1] + hexc):
                    layer = n
                    break
        s_aug = exc[-1] + hexc
        if layer < 0:
            s_bound = s_aug
            continue
        if layer > max_layers:
            truncated = True
            s_bound = s_aug
            continue
        times.append(t)
        layers.append(layer)
        s_bound = s_aug + h0
    return times, layers, truncated


# ----------------------------------------------------------------------------
# stationarity via burn-in
# ----------------------------------------------------------------------------

def stationary_burnin(model: HawkesModel, epsilon: float,
                      grid_step: float = 0.01, cap: float = 1e4) -> float:
    """Smallest grid multiple B with residual history influence below epsilon.

    The residual of events older than B is measured by the geometric coupling
    bound: (lipschitz / margin) * integral of t*h(t) over [B, inf).  Simulating
    from the empty configuration on [-B, T] and discarding [-B, 0] then
    approximates the stationary law on (0, T] up to epsilon in expected count
    gap per unit of history density.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be > 0")
    alpha = model.rate.lipschitz
    if alpha == 0.0 or model.kernel.family == "zero":
        return 0.0
    coef = alpha / model.stability_margin

    def residual(b):
        return coef * kernel_tail_first_moment(model.kernel, b)

    if residual(0.0) < epsilon:
        return 0.0
    if residual(cap) >= epsilon:
        raise ConfigError(
            f"requested epsilon {epsilon:g} needs a burn-in beyond the hard cap {cap:g}"
        )
    root = brentq(lambda b: residual(b) - epsilon, 0.0, cap, xtol=1e-10, rtol=1e-12)
    b = math.ceil(root / grid_step - 1e-12) * grid_step
    while residual(b) >= epsilon:
        b += grid_step
    return b


def stationary_window(output: SimulationOutput, burnin: float) -> EventSequence:
    """Re-anchor a run at the end of its burn-in.

    Events in (0, burnin] become the history segment (shifted to negative
    times); the remainder is the approximately stationary observation window.
    """
    if burnin < 0.0 or burnin >= output.events.horizon:
        raise ValueError("burn-in must lie in [0, horizon)")
    shifted = output.events.times - burnin
    return EventSequence(times=shifted, horizon=output.events.horizon - burnin,
                         history_depth=burnin)
