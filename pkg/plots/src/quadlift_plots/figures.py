"""Figure builders: violins of error distributions, worst-case trajectory
overlays, space-time heatmaps, and per-frequency bar comparisons."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
# keep text as text in SVG output so annotations stay machine-checkable
matplotlib.rcParams["svg.fonttype"] = "none"

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import (SchemaError, read_report, read_trajectory, read_violin,
                 report_methods)

KINDS = ("trajectory", "violin", "heatmap", "bar")


@dataclass
class FigureSpec:
    kind: str                       # trajectory | violin | heatmap | bar
    inputs: list                    # CSV paths
    output: str                     # image path (extension is replaced)
    methods: list = field(default_factory=list)   # label filter; empty = all

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")
        for p in self.inputs:
            if not Path(p).exists():
                raise SchemaError(f"input file {p} does not exist")


def _save(fig, output) -> list:
    """Write PNG and SVG siblings and return both paths."""
    base = Path(output)
    paths = [base.with_suffix(".png"), base.with_suffix(".svg")]
    base.parent.mkdir(parents=True, exist_ok=True)
    for p in paths:
        fig.savefig(p, bbox_inches="tight")
    plt.close(fig)
    return paths


def plot_violin(spec: FigureSpec) -> list:
    """One violin per method of per-IC errors; the number of unstable
    (excluded) rollouts is annotated above each violin."""
    methods, counts, columns = read_violin(spec.inputs[0])
    if spec.methods:
        missing = [m for m in spec.methods if m not in methods]
        if missing:
            raise SchemaError(f"methods {missing} not present in "
                              f"{spec.inputs[0]}")
        methods = list(spec.methods)
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(methods), 4.0))
    positions = np.arange(1, len(methods) + 1)
    data = []
    for m in methods:
        vals = columns[m]
        if len(vals) == 0:
            # keep the slot: a method whose rollouts were all unstable
            vals = np.array([np.nan])
        data.append(vals)
    drawable = [(p, d) for p, d in zip(positions, data)
                if np.isfinite(d).any()]
    if drawable:
        ax.violinplot([d for _, d in drawable],
                      positions=[p for p, _ in drawable],
                      showmedians=True)
    top = ax.get_ylim()[1]
    for pos, m in zip(positions, methods):
        ax.annotate(f"unstable: {counts[m]}", xy=(pos, top),
                    xytext=(0, 4), textcoords="offset points",
                    ha="center", fontsize=8)
    ax.set_xticks(positions)
    ax.set_xticklabels(methods)
    ax.set_ylabel("median log10 squared error (lower is better)")
    fig.tight_layout()
    return _save(fig, spec.output)


def plot_trajectories(spec: FigureSpec) -> list:
    """One panel per input CSV (the worst-case ICs), overlaying ground truth
    and every method for each state component."""
    fig, axes = plt.subplots(1, len(spec.inputs),
                             figsize=(4.0 * len(spec.inputs), 3.2),
                             squeeze=False)
    for ax, path in zip(axes[0], spec.inputs):
        t, series = read_trajectory(path)
        truth = series["true"]
        labels = spec.methods or [k for k in series if k != "true"]
        for label in labels:
            if label not in series:
                raise SchemaError(f"{path}: method {label!r} not present")
            if series[label].shape != truth.shape:
                raise SchemaError(f"{path}: {label!r} columns do not match "
                                  f"the ground-truth shape")
        n_states = truth.shape[1]
        for j in range(n_states):
            ax.plot(t, truth[:, j], color="black", lw=1.4,
                    label="truth" if j == 0 else None)
        for label in labels:
            for j in range(n_states):
                ax.plot(t, series[label][:, j], lw=1.0, ls="--",
                        label=label if j == 0 else None)
        ax.set_xlabel("t")
        ax.set_title(Path(path).stem)
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, spec.output)


def plot_heatmaps(spec: FigureSpec) -> list:
    """Ground truth next to each method as space-time heatmaps, one row per
    input CSV (one per test frequency)."""
    first_t, first_series = read_trajectory(spec.inputs[0])
    labels = spec.methods or [k for k in first_series if k != "true"]
    ncols = 1 + len(labels)
    nrows = len(spec.inputs)
    fig, axes = plt.subplots(nrows, ncols,
                             figsize=(3.2 * ncols, 2.6 * nrows),
                             squeeze=False)
    for row, path in enumerate(spec.inputs):
        t, series = read_trajectory(path)
        truth = series["true"]
        vmax = np.nanmax(np.abs(truth))
        panels = [("truth", truth)]
        for label in labels:
            if label not in series:
                raise SchemaError(f"{path}: method {label!r} not present")
            panels.append((label, series[label]))
        for col, (label, X) in enumerate(panels):
            ax = axes[row][col]
            ax.imshow(X.T, aspect="auto", origin="lower",
                      extent=(t[0], t[-1], 0.0, 1.0),
                      vmin=-vmax, vmax=vmax, cmap="RdBu_r")
            ax.set_title(f"{Path(path).stem}: {label}", fontsize=8)
            ax.set_xlabel("t")
            if col == 0:
                ax.set_ylabel("x")
    fig.tight_layout()
    return _save(fig, spec.output)


def plot_bar(spec: FigureSpec) -> list:
    """Grouped bars of error_relative per (method, IC) from the report."""
    rows = read_report(spec.inputs[0])
    methods = spec.methods or report_methods(rows)
    ics = sorted({r["ic_index"] for r in rows})
    values = {}
    for m in methods:
        per_ic = {r["ic_index"]: r["error_relative"] for r in rows
                  if r["method"] == m}
        missing = [ic for ic in ics if ic not in per_ic]
        if missing:
            raise SchemaError(f"method {m!r} has no rows for ICs {missing}")
        values[m] = [per_ic[ic] for ic in ics]
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(ics), 3.6))
    width = 0.8 / len(methods)
    xs = np.arange(len(ics), dtype=float)
    for k, m in enumerate(methods):
        ax.bar(xs + (k - (len(methods) - 1) / 2) * width, values[m],
               width=width, label=m)
    ax.set_yscale("log")
    ax.set_xticks(xs)
    ax.set_xticklabels([str(ic) for ic in ics])
    ax.set_xlabel("test case")
    ax.set_ylabel("relative error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, spec.output)


PLOTTERS = {
    "violin": plot_violin,
    "trajectory": plot_trajectories,
    "heatmap": plot_heatmaps,
    "bar": plot_bar,
}


def render(spec: FigureSpec) -> list:
    return PLOTTERS[spec.kind](spec)
