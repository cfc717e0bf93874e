"""Render the evaluation CSV exports as publication-style figures."""

from .io import SchemaError, read_report, read_trajectory, read_violin
from .figures import (FigureSpec, plot_bar, plot_heatmaps, plot_trajectories,
                      plot_violin)

__all__ = [
    "SchemaError", "read_report", "read_trajectory", "read_violin",
    "FigureSpec", "plot_bar", "plot_heatmaps", "plot_trajectories",
    "plot_violin",
]

__version__ = "0.1.0"
