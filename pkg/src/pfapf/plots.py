"""SVG reports from the CSVs written by runs and replays."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .filter import BELIEF_COLUMNS  # noqa: E402
from .pipeline import COMMAND_COLUMNS  # noqa: E402
from .scenario import TRAJECTORY_COLUMNS  # noqa: E402

TIMING_COLUMNS = ["frame", "compute_ms"]

matplotlib.rcParams["svg.hashsalt"] = "pfapf"
_SVG_META = {"Date": None, "Creator": None}


class PlotError(ValueError):
    pass


def _read(path, expected):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != expected:
        got = rows[0] if rows else []
        raise PlotError(f"{path}: expected columns {','.join(expected)}, got {','.join(got)}")
    return rows[1:]


def _float(s):
    return float(s) if s not in ("", None) else np.nan


def _save(fig, out):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return out


def plot_belief(csv_path, out):
    """Mode depth per frame, marker area proportional to its belief."""
    rows = [r for r in _read(csv_path, BELIEF_COLUMNS) if r[1] == "mode"]
    frame = np.array([int(r[0]) for r in rows])
    depth = np.array([_float(r[7]) for r in rows])
    belief = np.array([_float(r[8]) for r in rows])
    free = np.isnan(depth)
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.scatter(frame[~free], depth[~free], s=40 * belief[~free], c="k", linewidths=0)
    if free.any():
        top = np.nanmax(depth) if (~free).any() else 1.0
        ax.scatter(frame[free], np.full(free.sum(), top * 1.05), s=40 * belief[free],
                   marker="s", c="tab:green", linewidths=0, label="free space")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("frame")
    ax.set_ylabel("mode depth [m]")
    ax.set_ylim(bottom=0)
    return _save(fig, out)


def plot_trajectory(csv_path, out, scene=None):
    """Top-down path; goal regions and obstacles drawn when the scene is known."""
    rows = [r for r in _read(csv_path, TRAJECTORY_COLUMNS) if r[0] != "outcome"]
    xy = np.array([[float(r[1]), float(r[2])] for r in rows]).reshape(-1, 2)
    fig, ax = plt.subplots(figsize=(6, 6))
    if scene is not None:
        from .sim import Cable, Cylinder, Sphere

        for o in scene.obstacles:
            if isinstance(o, Sphere):
                ax.add_patch(plt.Circle(o.center[:2], o.radius, color="0.4"))
            elif isinstance(o, Cylinder):
                ax.add_patch(plt.Circle(o.base[:2], o.radius, color="0.4"))
            elif isinstance(o, Cable):
                a, b = np.asarray(o.a), np.asarray(o.b)
                ax.plot([a[0], b[0]], [a[1], b[1]], color="0.4", lw=max(1.0, 200 * o.radius))
        for n, g in enumerate(scene.goals):
            ax.add_patch(plt.Circle(g.center[:2], g.radius, fill=False,
                                    ls="-" if n == scene.target else "--", color="tab:green"))
    ax.plot(xy[:, 0], xy[:, 1], color="tab:blue")
    if len(xy):
        ax.plot(*xy[0], "o", color="tab:blue")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    return _save(fig, out)


def plot_commands(csv_path, out):
    """Repulsive force magnitude against the closest raw return and the mode depth."""
    rows = _read(csv_path, COMMAND_COLUMNS)
    t = np.array([float(r[1]) for r in rows])
    frep = np.array([_float(r[8]) for r in rows])
    mode = np.array([_float(r[9]) for r in rows])
    closest = np.array([_float(r[11]) for r in rows])
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(t, closest, ".", ms=3, color="0.5", label="closest point")
    ax.plot(t, mode, ".", ms=3, color="k", label="mode depth")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("depth [m]")
    ax2 = ax.twinx()
    ax2.plot(t, frep, color="tab:red", label="|F_rep|")
    ax2.set_ylabel("|F_rep|")
    lines = ax.get_legend_handles_labels()
    lines2 = ax2.get_legend_handles_labels()
    ax.legend(lines[0] + lines2[0], lines[1] + lines2[1], loc="upper right", fontsize=8)
    return _save(fig, out)


def plot_timing(csv_path, out):
    rows = _read(csv_path, TIMING_COLUMNS)
    ms = np.array([float(r[1]) for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(ms, bins=30, color="0.3")
    if len(ms):
        ax.axvline(np.median(ms), color="tab:red", label=f"median {np.median(ms):.1f} ms")
        ax.legend(fontsize=8)
    ax.set_xlabel("compute time per frame [ms]")
    ax.set_ylabel("frames")
    return _save(fig, out)


_BY_HEADER = {
    tuple(BELIEF_COLUMNS): ("belief", plot_belief),
    tuple(TRAJECTORY_COLUMNS): ("trajectory", plot_trajectory),
    tuple(COMMAND_COLUMNS): ("commands", plot_commands),
    tuple(TIMING_COLUMNS): ("timing", plot_timing),
}


def plot_csv(csv_path, out_dir=None, scene=None) -> Path:
    """Pick the plot from the CSV header and write ``<stem>.svg`` next to it or in ``out_dir``."""
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as f:
        header = tuple(next(csv.reader(f), []))
    if header not in _BY_HEADER:
        raise PlotError(f"{csv_path}: unrecognized columns {','.join(header)}")
    _, fn = _BY_HEADER[header]
    out = Path(out_dir or csv_path.parent) / f"{csv_path.stem}.svg"
    if fn is plot_trajectory:
        return fn(csv_path, out, scene)
    return fn(csv_path, out)
