"""Flat-file artifacts: branch/events/profile CSVs and ``key=value`` run files."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .continuation import Branch, EventKind

BRANCH_HEADER = ["step", "lambda", "measure_center", "measure_l2", "residual_norm",
                 "lambda_dot", "event"]
EVENTS_HEADER = ["kind", "lambda", "measure_center", "null_dim", "range_residual", "c2",
                 "fold_order", "classification"]
PROFILE_HEADER = ["r", "psi"]


class MalformedArtifact(ValueError):
    """A CSV or run file does not match its schema."""


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_branch_csv(path, branch: Branch, l2_measure) -> None:
    labels: dict[int, list[str]] = {}
    for e in branch.events:
        labels.setdefault(e.index, []).append(e.kind.value)
    rows = []
    for i, (pt, t) in enumerate(zip(branch.points, branch.tangents)):
        rows.append([i, fmt(pt.lam), fmt(pt.measure), fmt(l2_measure(pt)), fmt(pt.residual_norm),
                     fmt(t.dlam), "|".join(labels.get(i, []))])
    _write_rows(Path(path), BRANCH_HEADER, rows)


def write_events_csv(path, branch: Branch) -> None:
    rows = []
    for e in branch.events:
        r = e.report
        rows.append([e.kind.value, fmt(e.location.lam), fmt(e.location.measure),
                     fmt(r.null_dim) if r else "", fmt(r.range_test_residual) if r else "",
                     fmt(r.c2_estimate) if r else "", fmt(r.fold_order) if r else "",
                     r.classification.value if r else ""])
    _write_rows(Path(path), EVENTS_HEADER, rows)


def write_profile_csv(path, r, psi) -> None:
    _write_rows(Path(path), PROFILE_HEADER, [[fmt(a), fmt(b)] for a, b in zip(r, psi)])


def read_csv(path, header) -> list[dict[str, str]]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise MalformedArtifact(f"{path}: {exc}") from exc
    if not rows or rows[0] != header:
        raise MalformedArtifact(f"{path}: expected header {','.join(header)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MalformedArtifact(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        out.append(dict(zip(header, row)))
    return out


def parse_float(value: str, where: str) -> float:
    if value == "":
        return math.nan
    try:
        return float(value)
    except ValueError as exc:
        raise MalformedArtifact(f"{where}: not a number: {value!r}") from exc


def read_branch_columns(path) -> dict[str, np.ndarray]:
    rows = read_csv(path, BRANCH_HEADER)
    cols = {}
    for key in ("lambda", "measure_center", "measure_l2", "residual_norm", "lambda_dot"):
        cols[key] = np.array([parse_float(r[key], f"{path}:{key}") for r in rows])
    cols["event"] = [r["event"] for r in rows]
    return cols


def read_profile(path) -> tuple[np.ndarray, np.ndarray]:
    rows = read_csv(path, PROFILE_HEADER)
    r = np.array([parse_float(x["r"], f"{path}:r") for x in rows])
    psi = np.array([parse_float(x["psi"], f"{path}:psi") for x in rows])
    return r, psi


def write_keyvalue(path, values: dict) -> None:
    lines = [f"{k}={v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_keyvalue(path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedArtifact(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def fold_count(branch: Branch) -> int:
    return sum(1 for e in branch.events if e.kind is EventKind.FOLD)
