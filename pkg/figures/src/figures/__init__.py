"""Render optimizer-comparison figures from the harness's CSV outputs."""

from .plots import FigureSpec, plot_summary_bars, plot_trajectories

__version__ = "0.1.0"
