"""Batch command-line front-end.

    hawkeslab simulate|estimate|fclt|lil|verify --config cfg.toml --out DIR
              [--seed N] [--workers K]

Exit codes: 0 success, 1 configuration or usage error (including stability
violations), 2 statistical verification failure, 3 I/O failure.  Seed and
worker count can also be set with HAWKESLAB_SEED / HAWKESLAB_WORKERS; the
worker count never affects results, only wall time.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

import numpy as np

from . import fclt as fclt_mod
from . import io as io_mod
from . import lil as lil_mod
from . import pipelines
from .config import RunConfig, load_config
from .errors import AssumptionError, ConfigError, DegenerateVarianceError, StabilityError
from .estimate import CountSeries, TruncationPolicy, default_truncation_cap, estimate_sigma2, tail_diagnostic
from .simulate import EventSequence

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_STATISTICAL = 2
EXIT_IO = 3


def _resolve_cfg(args) -> RunConfig:
    if not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    cfg = load_config(args.config)
    seed_env = os.environ.get("HAWKESLAB_SEED")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = int(args.seed)
    elif seed_env is not None:
        overrides["seed"] = int(seed_env)
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return max(1, int(args.workers))
    env = os.environ.get("HAWKESLAB_WORKERS")
    if env is not None:
        return max(1, int(env))
    return os.cpu_count() or 1


def _ensure_out(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def cmd_simulate(cfg: RunConfig, workers: int) -> int:
    model = pipelines.build_model(cfg)
    out_dir = _ensure_out(cfg)
    results = pipelines.simulate_batch(model, cfg.horizon, cfg.replications,
                                       cfg.seed, workers)
    io_mod.write_events_csv(os.path.join(out_dir, "events.csv"),
                            [times for times, _, _ in results])
    io_mod.write_compensator_csv(os.path.join(out_dir, "compensator.csv"),
                                 [(grid, lam) for _, grid, lam in results])
    return EXIT_OK


def _counts_from_events(cfg: RunConfig, per_rep_times) -> np.ndarray:
    from .estimate import bin_counts

    bins = int(math.floor(cfg.horizon))
    rows = []
    for times in per_rep_times:
        seq = EventSequence(times=times, horizon=cfg.horizon)
        rows.append(bin_counts(seq, 0.0, bins).counts)
    return np.stack(rows)


def _estimate_payload(cfg: RunConfig, model, counts, stats, tail) -> dict:
    mu, sigma2 = pipelines.oracle_constants(model)
    payload = {
        "mu_hat": stats.mu_hat,
        "sigma2_series": stats.sigma2_series,
        "sigma2_batch": stats.sigma2_batch,
        "truncation_lag": stats.truncation_lag,
        "batch_width": stats.batch_width,
        "gamma": stats.gamma_hat,
        "standard_errors": {
            "mu_hat": stats.standard_errors["mu_hat"],
            "sigma2_series": stats.standard_errors["sigma2_series"],
            "sigma2_batch": stats.standard_errors["sigma2_batch"],
            "gamma": stats.standard_errors["gamma_hat"],
        },
        "n_replications": stats.n_replications,
        "bins_per_replication": stats.bins_per_replication,
        "oracle": None if mu is None else {"mu": mu, "sigma2": sigma2},
    }
    if tail is not None:
        payload["tail"] = {
            "theta": tail.theta_grid,
            "mgf": tail.empirical_mgf,
            "mgf_se": tail.mgf_se,
            "log_survival_slope": tail.log_survival_slope,
            "slope_se": tail.slope_se,
            "consistent_with_exponential_tail": tail.consistent_with_exponential_tail,
            "inconclusive": tail.inconclusive,
        }
    return payload


def cmd_estimate(cfg: RunConfig, workers: int) -> int:
    model = pipelines.build_model(cfg)
    out_dir = _ensure_out(cfg)
    events_path = os.path.join(out_dir, "events.csv")
    if os.path.exists(events_path):
        per_rep = io_mod.read_events_csv(events_path)
        counts = _counts_from_events(cfg, per_rep)
        policy = TruncationPolicy(mode="auto", max_lag=default_truncation_cap(model))
        stats = estimate_sigma2([CountSeries(c) for c in counts], policy)
        tail = tail_diagnostic([CountSeries(c) for c in counts]) if counts.size >= 10_000 else None
    else:
        stage = pipelines.estimate_stage(model, cfg, workers)
        counts, stats, tail = stage["counts"], stage["stats"], stage["tail"]
    io_mod.write_counts_csv(os.path.join(out_dir, "counts.csv"), counts)
    io_mod.write_json(os.path.join(out_dir, "stats.json"),
                      _estimate_payload(cfg, model, counts, stats, tail),
                      "stats.schema.json")
    return EXIT_OK


def _reference_constants(cfg: RunConfig, model, out_dir, workers):
    """(mu, sigma2): oracle when closed-form, else stats.json, else estimate."""
    mu, sigma2 = pipelines.oracle_constants(model)
    if mu is not None:
        return mu, sigma2
    stats_path = os.path.join(out_dir, "stats.json")
    if os.path.exists(stats_path):
        import json

        with open(stats_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return float(doc["mu_hat"]), float(doc["sigma2_series"])
    stage = pipelines.estimate_stage(model, cfg, workers)
    return stage["stats"].mu_hat, stage["stats"].sigma2_series


def cmd_fclt(cfg: RunConfig, workers: int) -> int:
    model = pipelines.build_model(cfg)
    out_dir = _ensure_out(cfg)
    mu, sigma2 = _reference_constants(cfg, model, out_dir, workers)
    stage = pipelines.fclt_stage(model, cfg, mu, workers)
    centered, compensated = stage["centered"], stage["compensated"]

    reports = []
    try:
        reports.append(fclt_mod.test_marginal_normality(centered, 1.0, sigma2, cfg.significance))
        reports.append(fclt_mod.variance_scaling_check(centered, cfg.s_points, sigma2))
        reports.append(fclt_mod.test_increment_independence(centered, cfg.s_points, cfg.significance))
        reports.append(fclt_mod.test_compensated_variance(compensated, mu))
    except ValueError as exc:
        print(f"fclt: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    io_mod.write_fclt_csv(os.path.join(out_dir, "fclt.csv"), centered, compensated)
    io_mod.write_json(
        os.path.join(out_dir, "report.json"),
        {
            "horizon": cfg.fclt_horizon,
            "replications": cfg.fclt_replications,
            "significance": cfg.significance,
            "mu": mu,
            "sigma2": sigma2,
            "max_jump": centered[0].max_jump if centered else 0.0,
            "reports": [r.as_dict() for r in reports],
        },
        "fclt_report.schema.json",
    )
    return EXIT_OK


def cmd_lil(cfg: RunConfig, workers: int) -> int:
    model = pipelines.build_model(cfg)
    out_dir = _ensure_out(cfg)
    mu, sigma2 = _reference_constants(cfg, model, out_dir, workers)
    stage = pipelines.lil_stage(model, cfg, mu, sigma2, workers)
    band = stage["band"]
    in_band = [band["tail_endpoint"]["lo"] <= r.tail_endpoint_stat <= band["tail_endpoint"]["hi"]
               for r in stage["reports"]]

    grid = np.linspace(0.0, 1.0, 201)
    per_rep_paths = []
    for seq in stage["sequences"]:
        per_rep_paths.append([lil_mod.build_eta(seq, int(n), grid) for n in stage["schedule"]])
    io_mod.write_lil_csv(os.path.join(out_dir, "lil.csv"), per_rep_paths)
    io_mod.write_json(
        os.path.join(out_dir, "lil_report.json"),
        {
            "n_max": cfg.lil_n_max,
            "schedule": [int(n) for n in stage["schedule"]],
            "s2_mode": cfg.lil_s2_mode,
            "sigma2": sigma2 if cfg.lil_s2_mode == "plugin" else None,
            "replications": cfg.lil_replications,
            "statistics": [
                {
                    "replication": i,
                    "sup_stat": r.sup_stat,
                    "tail_endpoint_stat": r.tail_endpoint_stat,
                    "envelope_energy": r.envelope_energy,
                }
                for i, r in enumerate(stage["reports"])
            ],
            "band": band,
            "pass_tail_in_band": bool(all(in_band)),
        },
        "lil_report.schema.json",
    )
    return EXIT_OK


def cmd_verify(cfg: RunConfig, workers: int) -> int:
    out_dir = _ensure_out(cfg)
    report = pipelines.verify_pipeline(cfg, workers)
    io_mod.write_json(os.path.join(out_dir, "verify.json"), report, "verify.schema.json")
    for c in report["criteria"]:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['name']}")
    print(f"overall: {'PASS' if report['pass'] else 'FAIL'}"
          + (" (under-powered budget)" if report["under_powered"] else ""))
    return EXIT_OK if report["pass"] else EXIT_STATISTICAL


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "fclt": cmd_fclt,
    "lil": cmd_lil,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hawkeslab",
                                     description="simulate and verify self-exciting count processes")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--workers", type=int, default=None,
                       help="replication workers (default: available CPUs)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_cfg(args)
        workers = _resolve_workers(args)
        return _COMMANDS[args.command](cfg, workers)
    except (ConfigError, StabilityError, AssumptionError, DegenerateVarianceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
