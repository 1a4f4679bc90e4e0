"""Deterministic CSV/JSON artifact writers.

All floats are emitted with 17 significant digits so values round-trip
exactly; JSON objects are written with sorted keys and no NaN/Inf, and every
JSON document is validated against its shipped schema before it reaches disk.
"""

from __future__ import annotations

import json
import math
from importlib import resources

import jsonschema
import numpy as np


def fmt(x) -> str:
    """17-significant-digit decimal rendering (exact float round-trip)."""
    return f"{float(x):.17g}"


def _sanitize(obj):
    """Replace non-finite floats with None and coerce numpy scalars/arrays."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def load_schema(name: str) -> dict:
    with resources.files("hawkeslab.schemas").joinpath(name).open("r") as fh:
        return json.load(fh)


def write_json(path, payload: dict, schema_name: str) -> None:
    payload = _sanitize(payload)
    jsonschema.validate(payload, load_schema(schema_name))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_events_csv(path, per_rep_times) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("replication,time\n")
        for rep, times in enumerate(per_rep_times):
            for t in times:
                fh.write(f"{rep},{fmt(t)}\n")


def read_events_csv(path):
    """Per-replication sorted time arrays from an events.csv."""
    per_rep: dict[int, list] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "replication,time":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            rep_s, t_s = line.rstrip("\n").split(",")
            per_rep.setdefault(int(rep_s), []).append(float(t_s))
    return [np.asarray(per_rep[r]) for r in sorted(per_rep)]


def write_compensator_csv(path, per_rep_grids) -> None:
    """Rows (replication, t, lambda_integral); one grid per replication."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("replication,t,lambda_integral\n")
        for rep, (grid, lam) in enumerate(per_rep_grids):
            for t, v in zip(grid, lam):
                fh.write(f"{rep},{fmt(t)},{fmt(v)}\n")


def write_counts_csv(path, counts_matrix) -> None:
    counts_matrix = np.asarray(counts_matrix)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("replication,bin,count\n")
        for rep in range(counts_matrix.shape[0]):
            row = counts_matrix[rep]
            for j in range(row.size):
                fh.write(f"{rep},{j},{int(row[j])}\n")


def write_fclt_csv(path, centered, compensated) -> None:
    """Rows (replication, s, value, kind) for both path families."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("replication,s,value,kind\n")
        for kind, paths in (("centered", centered), ("compensated", compensated)):
            for rep, p in enumerate(paths):
                for s, v in zip(p.grid, p.values):
                    fh.write(f"{rep},{fmt(s)},{fmt(v)},{kind}\n")


def write_lil_csv(path, per_rep_paths) -> None:
    """Rows (replication, n, t, eta)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("replication,n,t,eta\n")
        for rep, paths in enumerate(per_rep_paths):
            for p in paths:
                for t, v in zip(p.grid, p.values):
                    fh.write(f"{rep},{p.n},{fmt(t)},{fmt(v)}\n")
