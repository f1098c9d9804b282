"""File formats: trajectory CSV, JSON artifacts, experiment result tables.

Floats are written with ``repr`` (shortest round-trip representation) so a
load/save cycle reproduces every value exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidInputError


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_trajectories_csv(path, trajectories) -> None:
    """One row per snapshot: ``t, x1..xn, u1..um``; the terminal state row of
    each trajectory leaves the input fields empty."""
    trajectories = list(trajectories)
    if not trajectories:
        raise InvalidInputError("nothing to write")
    n = trajectories[0][0].shape[0]
    m = trajectories[0][1].shape[0]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for states, inputs in trajectories:
            L = inputs.shape[1]
            for t in range(L + 1):
                u = [_fmt(v) for v in inputs[:, t]] if t < L else [""] * m
                w.writerow([t] + [_fmt(v) for v in states[:, t]] + u)


def read_trajectories_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header = rows[0]
    n = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("u"))
    expected = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    if header != expected or n == 0 or m == 0:
        raise InvalidInputError(f"{path}: unexpected header {header}")
    trajectories, states, inputs = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InvalidInputError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            t = int(row[0])
            x = [float(v) for v in row[1 : 1 + n]]
            u_raw = row[1 + n :]
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
        if t != len(states):
            raise InvalidInputError(f"{path}:{lineno}: time index {t} out of sequence")
        states.append(x)
        if all(v == "" for v in u_raw):
            if not inputs:
                raise InvalidInputError(f"{path}:{lineno}: trajectory without inputs")
            trajectories.append((np.array(states).T, np.array(inputs).T))
            states, inputs = [], []
        else:
            try:
                inputs.append([float(v) for v in u_raw])
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
    if states:
        raise InvalidInputError(f"{path}: last trajectory has no terminal state row")
    return trajectories


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2) + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc})") from exc


def write_results_csv(path, rows, columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if isinstance(row[c], float) and math.isnan(row[c]) else _fmt(row[c]) for c in columns])


def read_results_csv(path) -> list[dict]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if k in ("status", "solver"):
                    row[k] = v
                elif k in ("rep", "bits", "gcc_violations", "saturated"):
                    row[k] = int(v)
                else:
                    row[k] = float(v) if v != "" else math.nan
            out.append(row)
    return out
