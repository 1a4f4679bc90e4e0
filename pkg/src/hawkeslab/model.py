"""Excitation kernels, rate functions, and validated self-exciting models.

A model is a pair (kernel h, rate function lam).  The conditional intensity of
the point process is lam(sum of h(t - tau) over past events tau).  Stability
requires the rate's Lipschitz constant alpha and the kernel mass to satisfy
alpha * ||h||_1 < 1; `validate_model` certifies this together with the
structural requirements (h non-increasing and integrable with finite first
moment, lam positive and non-decreasing).

All kernel integrals are closed-form per family.  Quadrature never enters
model construction; it is used only by the test suite to cross-check the
cached values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, StabilityError

KERNEL_FAMILIES = ("exponential", "power-law", "zero")
RATE_FAMILIES = ("linear", "saturating", "clipped-linear")

# Deterministic guard grid for the monotonicity certificates: 0 plus a
# log-spaced sweep across ten orders of magnitude, 1000 points total.
_CHECK_GRID = np.concatenate(([0.0], np.logspace(-6.0, 4.0, 999)))


@dataclass(frozen=True)
class Kernel:
    """Excitation kernel h with cached closed-form integrals.

    Attributes
    ----------
    family : str
        One of ``exponential`` (a * exp(-b t)), ``power-law``
        (c * (t + t0)**(-p), p > 2) or ``zero``.
    params : dict
        Family parameters.
    value_at_zero : float
        h(0); must be finite (the thinning simulator needs a finite
        dominating intensity immediately after an event).
    l1_norm : float
        Integral of h over [0, inf).
    first_moment : float
        Integral of t * h(t) over [0, inf).
    """

    family: str
    params: dict
    value_at_zero: float
    l1_norm: float
    first_moment: float

    @staticmethod
    def exponential(a: float, b: float) -> "Kernel":
        if a <= 0:
            raise ValueError("exponential kernel needs amplitude a > 0 (use Kernel.zero() for no excitation)")
        if b <= 0:
            raise ValueError("exponential kernel needs decay rate b > 0")
        return Kernel(
            family="exponential",
            params={"a": float(a), "b": float(b)},
            value_at_zero=float(a),
            l1_norm=a / b,
            first_moment=a / b**2,
        )

    @staticmethod
    def power_law(c: float, p: float, t0: float) -> "Kernel":
        if c <= 0:
            raise ValueError("power-law kernel needs amplitude c > 0")
        if p <= 2:
            raise ValueError("power-law kernel needs exponent p > 2 so that the first moment is finite")
        if t0 <= 0:
            raise ValueError("power-law kernel needs offset t0 > 0 so that h(0) is finite")
        return Kernel(
            family="power-law",
            params={"c": float(c), "p": float(p), "t0": float(t0)},
            value_at_zero=c * t0 ** (-p),
            l1_norm=c * t0 ** (1.0 - p) / (p - 1.0),
            first_moment=c * t0 ** (2.0 - p) / ((p - 1.0) * (p - 2.0)),
        )

    @staticmethod
    def zero() -> "Kernel":
        return Kernel(family="zero", params={}, value_at_zero=0.0, l1_norm=0.0, first_moment=0.0)

    def __call__(self, t):
        return kernel_eval(self, t)


@dataclass(frozen=True)
class RateFunction:
    """Rate function lam mapping accumulated excitation z >= 0 to an intensity.

    Families:
      linear          lam(z) = nu + z            (Lipschitz constant 1)
      saturating      lam(z) = nu + alpha * z / (1 + z)
      clipped-linear  lam(z) = nu + alpha * min(z, cap)
    """

    family: str
    params: dict
    lipschitz: float
    base: float

    @staticmethod
    def linear(nu: float) -> "RateFunction":
        if nu <= 0:
            raise ValueError("baseline nu must be > 0")
        return RateFunction("linear", {"nu": float(nu)}, lipschitz=1.0, base=float(nu))

    @staticmethod
    def saturating(nu: float, alpha: float) -> "RateFunction":
        if nu <= 0:
            raise ValueError("baseline nu must be > 0")
        if alpha < 0:
            raise ValueError("gain alpha must be >= 0")
        return RateFunction("saturating", {"nu": float(nu), "alpha": float(alpha)}, lipschitz=float(alpha), base=float(nu))

    @staticmethod
    def clipped_linear(nu: float, alpha: float, cap: float) -> "RateFunction":
        if nu <= 0:
            raise ValueError("baseline nu must be > 0")
        if alpha < 0:
            raise ValueError("gain alpha must be >= 0")
        if cap <= 0:
            raise ValueError("cap must be > 0")
        return RateFunction(
            "clipped-linear",
            {"nu": float(nu), "alpha": float(alpha), "cap": float(cap)},
            lipschitz=float(alpha),
            base=float(nu),
        )

    def __call__(self, z):
        return rate_eval(self, z)


@dataclass(frozen=True)
class HawkesModel:
    """A validated (kernel, rate) pair.  Only `validate_model` constructs these."""

    kernel: Kernel
    rate: RateFunction
    stability_margin: float


@dataclass(frozen=True)
class History:
    """A finite record of past events at times <= 0, strictly increasing."""

    times: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        arr = np.asarray(self.times, dtype=float)
        if arr.ndim != 1:
            raise ValueError("history times must be a 1-d sequence")
        if arr.size and np.any(arr > 0.0):
            raise ValueError("history times must all be <= 0")
        if arr.size > 1 and np.any(np.diff(arr) <= 0.0):
            raise ValueError("history times must be strictly increasing")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "times", arr)

    @staticmethod
    def empty() -> "History":
        return History(np.empty(0))

    @property
    def depth(self) -> float:
        return float(-self.times[0]) if self.times.size else 0.0


def kernel_eval(kernel: Kernel, t):
    """Evaluate h(t) for t >= 0 (scalar or array)."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("kernel is defined on t >= 0")
    if kernel.family == "exponential":
        out = kernel.params["a"] * np.exp(-kernel.params["b"] * arr)
    elif kernel.family == "power-law":
        out = kernel.params["c"] * (arr + kernel.params["t0"]) ** (-kernel.params["p"])
    else:
        out = np.zeros_like(arr)
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


def kernel_tail_integral(kernel: Kernel, t):
    """Tail mass H(t) = integral of h over [t, inf), closed form per family.

    H(0) equals the kernel's L1 norm, and the integral of H over [0, inf)
    equals the kernel's first moment; both identities are exercised by the
    test suite with quadrature.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("tail integral is defined on t >= 0")
    if kernel.family == "exponential":
        a, b = kernel.params["a"], kernel.params["b"]
        out = (a / b) * np.exp(-b * arr)
    elif kernel.family == "power-law":
        c, p, t0 = kernel.params["c"], kernel.params["p"], kernel.params["t0"]
        out = c * (arr + t0) ** (1.0 - p) / (p - 1.0)
    else:
        out = np.zeros_like(arr)
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


def kernel_tail_first_moment(kernel: Kernel, t):
    """Integral of s * h(s) over [t, inf), closed form per family.

    This is the quantity driving the burn-in length: the residual influence
    of events older than t decays with it.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("tail first moment is defined on t >= 0")
    if kernel.family == "exponential":
        a, b = kernel.params["a"], kernel.params["b"]
        out = a * np.exp(-b * arr) * (arr / b + 1.0 / b**2)
    elif kernel.family == "power-law":
        c, p, t0 = kernel.params["c"], kernel.params["p"], kernel.params["t0"]
        u = arr + t0
        out = c * (u ** (2.0 - p) / (p - 2.0) - t0 * u ** (1.0 - p) / (p - 1.0))
    else:
        out = np.zeros_like(arr)
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


def rate_eval(rate: RateFunction, z):
    """Evaluate lam(z) for excitation z >= 0 (scalar or array)."""
    arr = np.asarray(z, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("rate function is defined on z >= 0")
    nu = rate.params["nu"]
    if rate.family == "linear":
        out = nu + arr
    elif rate.family == "saturating":
        alpha = rate.params["alpha"]
        out = nu + alpha * arr / (1.0 + arr)
    else:
        alpha, cap = rate.params["alpha"], rate.params["cap"]
        out = nu + alpha * np.minimum(arr, cap)
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def _certify_kernel(kernel: Kernel):
    if not math.isfinite(kernel.value_at_zero):
        raise AssumptionError("kernel value at zero must be finite (thinning needs a finite bound)")
    if not (math.isfinite(kernel.l1_norm) and math.isfinite(kernel.first_moment)):
        raise AssumptionError("kernel must have finite mass and finite first moment")
    vals = kernel_eval(kernel, _CHECK_GRID)
    if np.any(vals < 0.0):
        raise AssumptionError("kernel must be nonnegative")
    if np.any(np.diff(vals) > 1e-12 * max(kernel.value_at_zero, 1.0)):
        raise AssumptionError("kernel must be non-increasing on [0, inf)")


def _certify_rate(rate: RateFunction):
    vals = rate_eval(rate, _CHECK_GRID)
    if np.any(vals <= 0.0):
        raise AssumptionError("rate function must be positive")
    if np.any(np.diff(vals) < -1e-12 * max(rate.base, 1.0)):
        raise AssumptionError("rate function must be non-decreasing")
    # Sampled Lipschitz certificate on consecutive grid pairs.  The absolute
    # slack covers rounding in lam evaluation where the grid spacing is tiny.
    dz = np.diff(_CHECK_GRID)
    slack = 16.0 * np.finfo(float).eps * max(1.0, float(np.max(vals)))
    if np.any(np.abs(np.diff(vals)) > rate.lipschitz * dz * (1.0 + 1e-9) + slack):
        raise AssumptionError("sampled Lipschitz ratio exceeds the cached constant")


def validate_model(kernel: Kernel, rate: RateFunction) -> HawkesModel:
    """Certify the (kernel, rate) pair and return a model with cached margin.

    Raises
    ------
    StabilityError
        If lipschitz * l1_norm >= 1 (no stationary regime).
    AssumptionError
        If a monotonicity/positivity/finiteness certificate fails.
    """
    _certify_kernel(kernel)
    _certify_rate(rate)
    spectral = rate.lipschitz * kernel.l1_norm
    margin = 1.0 - spectral
    if margin <= 0.0:
        raise StabilityError(
            f"stability violation: lipschitz * kernel mass = {spectral:.6g} >= 1"
        )
    return HawkesModel(kernel=kernel, rate=rate, stability_margin=margin)
