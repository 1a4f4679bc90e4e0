"""Run configuration: TOML parsing, validation, and round-trip serialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib as _toml  # py311+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as _toml

from .errors import ConfigError
from .model import Kernel, RateFunction

_KERNEL_PARAMS = {
    "exponential": ("a", "b"),
    "power-law": ("c", "p", "t0"),
    "zero": (),
}
_RATE_PARAMS = {
    "linear": ("nu",),
    "saturating": ("nu", "alpha"),
    "clipped-linear": ("nu", "alpha", "cap"),
}


@dataclass(frozen=True)
class RunConfig:
    kernel_family: str = "exponential"
    kernel_params: dict = field(default_factory=lambda: {"a": 1.0, "b": 2.0})
    rate_family: str = "linear"
    rate_params: dict = field(default_factory=lambda: {"nu": 1.0})

    horizon: float = 1000.0
    replications: int = 50
    seed: int = 3
    burnin_epsilon: float = 1e-3

    fclt_horizon: float = 2000.0
    fclt_replications: int = 1000
    fclt_grid: int = 101
    significance: float = 0.01
    s_points: tuple = (0.25, 0.5, 0.75, 1.0)

    lil_n_max: int = 100_000
    lil_replications: int = 4
    lil_schedule_points: int = 20
    lil_s2_mode: str = "plugin"
    lil_oracle_replications: int = 400

    coupling_seeds: int = 100
    coupling_history_point: float = -1.0
    coupling_horizon: float = 30.0

    out_dir: str = "out"

    def build_kernel(self) -> Kernel:
        fam = self.kernel_family
        p = self.kernel_params
        try:
            if fam == "exponential":
                return Kernel.exponential(p["a"], p["b"])
            if fam == "power-law":
                return Kernel.power_law(p["c"], p["p"], p["t0"])
            if fam == "zero":
                return Kernel.zero()
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"[kernel] {exc}") from exc
        raise ConfigError(f"[kernel] unknown family {fam!r}")

    def build_rate(self) -> RateFunction:
        fam = self.rate_family
        p = self.rate_params
        try:
            if fam == "linear":
                return RateFunction.linear(p["nu"])
            if fam == "saturating":
                return RateFunction.saturating(p["nu"], p["alpha"])
            if fam == "clipped-linear":
                return RateFunction.clipped_linear(p["nu"], p["alpha"], p["cap"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"[rate] {exc}") from exc
        raise ConfigError(f"[rate] unknown family {fam!r}")


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.kernel_family not in _KERNEL_PARAMS:
        raise ConfigError(f"[kernel] unknown family {cfg.kernel_family!r}")
    if cfg.rate_family not in _RATE_PARAMS:
        raise ConfigError(f"[rate] unknown family {cfg.rate_family!r}")
    for name, params, expected in (
        ("kernel", cfg.kernel_params, _KERNEL_PARAMS[cfg.kernel_family]),
        ("rate", cfg.rate_params, _RATE_PARAMS[cfg.rate_family]),
    ):
        missing = [k for k in expected if k not in params]
        extra = [k for k in params if k not in expected]
        if missing:
            raise ConfigError(f"[{name}] missing parameter(s): {', '.join(missing)}")
        if extra:
            raise ConfigError(f"[{name}] unexpected parameter(s): {', '.join(extra)}")
    if cfg.horizon <= 0 or cfg.fclt_horizon <= 0 or cfg.coupling_horizon <= 0:
        raise ConfigError("horizons must be > 0")
    if cfg.replications < 1 or cfg.fclt_replications < 1 or cfg.lil_replications < 1:
        raise ConfigError("replication counts must be >= 1")
    if not 0.0 < cfg.significance <= 0.1:
        raise ConfigError("significance must lie in (0, 0.1]")
    if cfg.burnin_epsilon <= 0:
        raise ConfigError("burnin_epsilon must be > 0")
    s = np.asarray(cfg.s_points, dtype=float)
    if s.size < 1 or np.any(np.diff(s) <= 0) or s[0] <= 0 or s[-1] > 1:
        raise ConfigError("s_points must be strictly increasing in (0, 1]")
    grid = np.linspace(0.0, 1.0, cfg.fclt_grid) if cfg.fclt_grid >= 2 else np.array([0.0, 1.0])
    for point in s:
        if np.min(np.abs(grid - point)) > 1e-9:
            raise ConfigError(
                f"s_points entry {point:g} does not lie on the fclt grid of {cfg.fclt_grid} points"
            )
    if cfg.lil_s2_mode not in ("plugin", "empirical"):
        raise ConfigError("lil s2_mode must be 'plugin' or 'empirical'")
    if cfg.fclt_grid < 2 or cfg.lil_schedule_points < 2:
        raise ConfigError("grid sizes must be >= 2")
    if cfg.lil_n_max < 1 or cfg.lil_oracle_replications < 2 or cfg.coupling_seeds < 1:
        raise ConfigError("lil/coupling sizes out of range")
    if cfg.coupling_history_point > 0:
        raise ConfigError("coupling history point must be <= 0")
    return cfg


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse TOML text into a validated RunConfig.

    TOML syntax errors are re-raised as ConfigError with the parser's
    line/column context attached.
    """
    try:
        doc = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    kernel = doc.get("kernel", {})
    rate = doc.get("rate", {})
    run = doc.get("run", {})
    fclt = doc.get("fclt", {})
    lil = doc.get("lil", {})
    coupling = doc.get("coupling", {})
    output = doc.get("output", {})
    known = {"kernel", "rate", "run", "fclt", "lil", "coupling", "output"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{source}: unknown section(s): {', '.join(sorted(unknown))}")

    def grab(table, key, default, kind):
        val = table.get(key, default)
        try:
            return kind(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {val!r}") from exc

    def numeric_params(table, name):
        out = {}
        for k, v in table.items():
            if k == "family":
                continue
            try:
                out[k] = float(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{source}: [{name}] {k} must be numeric, got {v!r}") from exc
        return out

    base = RunConfig()
    cfg = RunConfig(
        kernel_family=grab(kernel, "family", base.kernel_family, str),
        kernel_params=numeric_params(kernel, "kernel") if "kernel" in doc else dict(base.kernel_params),
        rate_family=grab(rate, "family", base.rate_family, str),
        rate_params=numeric_params(rate, "rate") if "rate" in doc else dict(base.rate_params),
        horizon=grab(run, "horizon", base.horizon, float),
        replications=grab(run, "replications", base.replications, int),
        seed=grab(run, "seed", base.seed, int),
        burnin_epsilon=grab(run, "burnin_epsilon", base.burnin_epsilon, float),
        fclt_horizon=grab(fclt, "horizon", base.fclt_horizon, float),
        fclt_replications=grab(fclt, "replications", base.fclt_replications, int),
        fclt_grid=grab(fclt, "grid", base.fclt_grid, int),
        significance=grab(fclt, "significance", base.significance, float),
        s_points=tuple(float(x) for x in fclt.get("s_points", base.s_points)),
        lil_n_max=grab(lil, "n_max", base.lil_n_max, int),
        lil_replications=grab(lil, "replications", base.lil_replications, int),
        lil_schedule_points=grab(lil, "schedule_points", base.lil_schedule_points, int),
        lil_s2_mode=grab(lil, "s2_mode", base.lil_s2_mode, str),
        lil_oracle_replications=grab(lil, "oracle_replications", base.lil_oracle_replications, int),
        coupling_seeds=grab(coupling, "seeds", base.coupling_seeds, int),
        coupling_history_point=grab(coupling, "history_point", base.coupling_history_point, float),
        coupling_horizon=grab(coupling, "horizon", base.coupling_horizon, float),
        out_dir=grab(output, "directory", base.out_dir, str),
    )
    return _validate(cfg)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def serialize_config(cfg: RunConfig) -> str:
    """Emit TOML that parses back to an identical RunConfig."""
    lines = ["[kernel]", f'family = "{cfg.kernel_family}"']
    for k, v in cfg.kernel_params.items():
        lines.append(f"{k} = {_fmt(float(v))}")
    lines += ["", "[rate]", f'family = "{cfg.rate_family}"']
    for k, v in cfg.rate_params.items():
        lines.append(f"{k} = {_fmt(float(v))}")
    lines += [
        "",
        "[run]",
        f"horizon = {_fmt(cfg.horizon)}",
        f"replications = {cfg.replications}",
        f"seed = {cfg.seed}",
        f"burnin_epsilon = {_fmt(cfg.burnin_epsilon)}",
        "",
        "[fclt]",
        f"horizon = {_fmt(cfg.fclt_horizon)}",
        f"replications = {cfg.fclt_replications}",
        f"grid = {cfg.fclt_grid}",
        f"significance = {_fmt(cfg.significance)}",
        f"s_points = {_fmt(cfg.s_points)}",
        "",
        "[lil]",
        f"n_max = {cfg.lil_n_max}",
        f"replications = {cfg.lil_replications}",
        f"schedule_points = {cfg.lil_schedule_points}",
        f's2_mode = "{cfg.lil_s2_mode}"',
        f"oracle_replications = {cfg.lil_oracle_replications}",
        "",
        "[coupling]",
        f"seeds = {cfg.coupling_seeds}",
        f"history_point = {_fmt(cfg.coupling_history_point)}",
        f"horizon = {_fmt(cfg.coupling_horizon)}",
        "",
        "[output]",
        f'directory = "{cfg.out_dir}"',
        "",
    ]
    return "\n".join(lines)
