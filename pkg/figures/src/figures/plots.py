"""Trajectory overlays and SD comparison bars.

Consumes only the harness's documented CSV schemas:

  trace:    run_id,t,theta_0..theta_{q-1},realized_size  (one file per run)
  summary:  method,coordinate,min,median,max,mean,sd     (one row per pair)

Rendering is read-only and deterministic: SVG timestamps and content
hashing salts are pinned so identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "figures"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

LINE_STYLES = ("-", ":", "--", "-.")
SUMMARY_COLUMNS = ("method", "coordinate", "min", "median", "max", "mean", "sd")


@dataclass
class FigureSpec:
    """What to draw: input CSVs, the coordinate, the methods, the target file."""

    output_path: str
    coordinate: int = 0
    methods: list[str] = field(default_factory=list)
    trace_paths: list[str] = field(default_factory=list)
    summary_path: str | None = None
    true_value: float | None = None
    image_format: str = "svg"

    def __post_init__(self) -> None:
        if self.image_format not in ("svg", "png"):
            raise ValueError(f"unsupported format {self.image_format!r}")
        if self.coordinate < 0:
            raise ValueError("coordinate must be nonnegative")


def method_of_trace(path) -> str:
    """Method label from the harness's '<method>_rep<k>.csv' naming."""
    stem = Path(path).stem
    return stem.split("_rep")[0] if "_rep" in stem else stem


def read_trace(path, coordinate: int) -> np.ndarray:
    """The theta_<coordinate> column of one trace file, indexed by t."""
    column = f"theta_{coordinate}"
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if column not in header:
            raise ValueError(f"{path}: no column {column!r} in trace header")
        idx = header.index(column)
        return np.array([float(row[idx]) for row in reader if row])


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != SUMMARY_COLUMNS:
            raise ValueError(f"{path}: unexpected summary header {header}")
        rows = []
        for raw in reader:
            if not raw:
                continue
            row = dict(zip(header, raw))
            row["coordinate"] = int(row["coordinate"])
            for key in ("min", "median", "max", "mean", "sd"):
                row[key] = float(row[key])
            rows.append(row)
    return rows


def _save(fig, spec: FigureSpec) -> Path:
    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    # Date metadata is the one nondeterministic SVG field; drop it.
    fig.savefig(out, format=spec.image_format, metadata=(
        {"Date": None} if spec.image_format == "svg" else None))
    plt.close(fig)
    return out


def plot_trajectories(spec: FigureSpec) -> Path:
    """Overlay per-method estimate trajectories for one coordinate.

    Every trace file contributes one line; files of the same method share
    a color and line style, so a 50-replication bundle reads as one band.
    A horizontal reference marks the true value when given.
    """
    if not spec.methods:
        raise ValueError("no methods to overlay")
    if not spec.trace_paths:
        raise ValueError("no trace files given")

    by_method: dict[str, list[Path]] = {m: [] for m in spec.methods}
    for path in spec.trace_paths:
        m = method_of_trace(path)
        if m in by_method:
            by_method[m].append(Path(path))
    missing = [m for m, paths in by_method.items() if not paths]
    if missing:
        raise ValueError(f"no trace files for methods {missing}")

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for k, method in enumerate(spec.methods):
        style = LINE_STYLES[k % len(LINE_STYLES)]
        color = colors[k % len(colors)]
        for j, path in enumerate(sorted(by_method[method])):
            series = read_trace(path, spec.coordinate)
            ax.plot(np.arange(series.size), series, style, color=color,
                    linewidth=0.9, alpha=0.8 if len(by_method[method]) > 1 else 1.0,
                    label=method if j == 0 else None)
    if spec.true_value is not None:
        ax.axhline(spec.true_value, color="black", linewidth=0.8, alpha=0.6)
    ax.set_xlabel("iteration")
    ax.set_ylabel(f"theta_{spec.coordinate}")
    ax.legend()
    fig.tight_layout()
    return _save(fig, spec)


def summary_bar_heights(spec: FigureSpec) -> dict[str, tuple[float, float]]:
    """Per-method (sd, half-range) for the requested coordinate."""
    if spec.summary_path is None:
        raise ValueError("summary_path is required for bar charts")
    rows = [r for r in read_summary(spec.summary_path)
            if r["coordinate"] == spec.coordinate]
    if not rows:
        raise ValueError(
            f"{spec.summary_path}: no rows for coordinate {spec.coordinate}")
    available = {r["method"] for r in rows}
    methods = spec.methods or sorted(available)
    missing = [m for m in methods if m not in available]
    if missing:
        raise ValueError(f"no summary rows for methods {missing}")
    out = {}
    for m in methods:
        row = next(r for r in rows if r["method"] == m)
        out[m] = (row["sd"], 0.5 * (row["max"] - row["min"]))
    return out


def plot_summary_bars(spec: FigureSpec) -> Path:
    """Bars of per-method final-estimate SDs, whiskered by the half-range."""
    heights = summary_bar_heights(spec)
    methods = list(heights)
    sds = [heights[m][0] for m in methods]
    whiskers = [heights[m][1] for m in methods]

    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    x = np.arange(len(methods))
    ax.bar(x, sds, width=0.6, alpha=0.85)
    ax.errorbar(x, sds, yerr=whiskers, fmt="none", ecolor="black",
                capsize=4, linewidth=1.0)
    ax.set_xticks(x, methods)
    ax.set_ylabel(f"sd of final theta_{spec.coordinate}")
    fig.tight_layout()
    return _save(fig, spec)
