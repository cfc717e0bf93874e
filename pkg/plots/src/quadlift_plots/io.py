"""Readers for the evaluation CSV exports.

Three file kinds are understood:

* the per-(method, IC) report with columns
  ``method, ic_index, error_median_log, error_relative, stable, n_samples``
* the violin export: one column per method, a first data line of unstable
  counts, then per-IC error values (columns may have different lengths)
* worst-case trajectory overlays: a time column ``t``, ground-truth columns
  ``true_x<j>`` and per-method columns ``<method>_x<j>``

Values are rendered verbatim; nothing here recomputes a metric.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

REPORT_FIELDS = ("method", "ic_index", "error_median_log", "error_relative",
                 "stable", "n_samples")


class SchemaError(RuntimeError):
    pass


def _require(path: Path):
    if not Path(path).exists():
        raise SchemaError(f"input file {path} does not exist")


def read_report(path) -> list[dict]:
    """Rows of the evaluation report as typed dicts."""
    _require(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(REPORT_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(
                f"{path}: missing report columns {sorted(missing)}")
        for r in reader:
            rows.append({
                "method": r["method"],
                "ic_index": int(r["ic_index"]),
                "error_median_log": float(r["error_median_log"]),
                "error_relative": float(r["error_relative"]),
                "stable": r["stable"] in ("True", "true", "1"),
                "n_samples": int(r["n_samples"]),
            })
    if not rows:
        raise SchemaError(f"{path}: report holds no rows")
    return rows


def report_methods(rows: list[dict]) -> list[str]:
    seen = []
    for r in rows:
        if r["method"] not in seen:
            seen.append(r["method"])
    return seen


def read_violin(path):
    """Violin export -> (methods, unstable counts, per-method error arrays).

    Unstable rollouts were already excluded from the value columns by the
    exporter; the counts line records how many were dropped per method.
    """
    _require(path)
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2:
        raise SchemaError(f"{path}: expected a header and a counts line")
    methods = [m.strip() for m in lines[0].split(",")]
    counts_part = lines[1].split("#")[0]
    try:
        counts = [int(c.strip()) for c in counts_part.split(",")]
    except ValueError:
        raise SchemaError(f"{path}: second line must hold unstable counts")
    if len(counts) != len(methods):
        raise SchemaError(f"{path}: counts do not align with methods")
    columns = {m: [] for m in methods}
    for line in lines[2:]:
        cells = line.split(",")
        for m, cell in zip(methods, cells):
            if cell.strip():
                columns[m].append(float(cell))
    return methods, dict(zip(methods, counts)), \
        {m: np.asarray(v) for m, v in columns.items()}


def read_trajectory(path):
    """Overlay export -> (t, {label: (n_times, n_states) array}).

    The ``true`` label holds the ground truth; other labels are methods.
    """
    _require(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(c) if c.strip() else np.nan for c in row]
                         for row in reader])
    if not header or header[0] != "t":
        raise SchemaError(f"{path}: first column must be 't'")
    if data.size == 0:
        raise SchemaError(f"{path}: no samples")
    t = data[:, 0]
    groups: dict[str, dict[int, np.ndarray]] = {}
    for col, name in enumerate(header[1:], start=1):
        label, _, comp = name.rpartition("_x")
        if not label or not comp.isdigit():
            raise SchemaError(f"{path}: column {name!r} is not of the "
                              f"form <label>_x<j>")
        groups.setdefault(label, {})[int(comp)] = data[:, col]
    series = {}
    for label, comps in groups.items():
        idx = sorted(comps)
        if idx != list(range(len(idx))):
            raise SchemaError(f"{path}: state components for {label!r} "
                              f"are not contiguous")
        series[label] = np.column_stack([comps[j] for j in idx])
    if "true" not in series:
        raise SchemaError(f"{path}: ground-truth columns 'true_x<j>' missing")
    return t, series
