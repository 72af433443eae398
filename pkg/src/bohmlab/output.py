"""Deterministic file writers.

Floats are written as their shortest round-trip repr (at most 17 significant
digits), so identical inputs give byte-identical files. CSVs are UTF-8 with a
header row and LF line endings.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else repr(v)
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    text = json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_lines(path, values) -> Path:
    path = Path(path)
    path.write_text("".join(fmt(v) + "\n" for v in values), encoding="utf-8")
    return path


_PLOT_HEAD = '''"""Plots for a bohmlab run. Generated file; run it from anywhere with matplotlib installed."""
import csv
import json
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent


def read_csv(name):
    with open(HERE / name, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for key in rows[0] if rows else []:
        col = [r[key] for r in rows]
        try:
            out[key] = np.array([float(v) if v else np.nan for v in col])
        except ValueError:
            out[key] = np.array(col)
    return out

'''

_PLOT_DENSITY = '''
def density_panel(ax):
    d = read_csv("density.csv")
    ts, xs = np.unique(d["t"]), np.unique(d["x"])
    rho = d["rho"].reshape(len(ts), len(xs))
    ax.pcolormesh(ts, xs, rho.T, shading="auto", cmap="magma")
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    return ax

'''

_PLOT_TRAJ = '''
def trajectory_overlay(ax, method):
    d = read_csv("trajectories.csv")
    keep = d["method"] == method
    for rid in np.unique(d["run_id"][keep]):
        sel = keep & (d["run_id"] == rid)
        ax.plot(d["t"][sel], d["x"][sel], lw=0.6, color="cyan")

'''

_PLOT_FRAMES = '''
def frames_panel(ax):
    f = read_csv("frames.csv")
    ax.semilogy(f["t"], np.maximum(1.0 - f["fidelity"], 1e-17), label="1 - fidelity")
    ax.semilogy(f["t"], np.abs(f["norm"] - 1.0) + 1e-17, label="|norm - 1|")
    ax.set_xlabel("t")
    ax.legend()

'''

_PLOT_AVERAGES = '''
def averages_panel(ax):
    s = json.loads((HERE / "summary.json").read_text())
    per = read_csv("per_trajectory.csv")
    ax.plot(per["p0"], per["occupancy"], "o", label="time average (single trajectory)")
    ax.axhline(s["ensemble_interval_prob_time_avg"], color="k", ls="--", label="ensemble average")
    ax.set_xlabel("initial quantile p0")
    ax.set_ylabel("fraction of time in bump interval")
    ax.legend()

'''

_PLOT_MAIN = {
    "protect": '''
if __name__ == "__main__":
    fig, axes = plt.subplots(1, 3, figsize=(16, 4.5))
    density_panel(axes[0])
    trajectory_overlay(axes[0], "quantile")
    frames_panel(axes[1])
    averages_panel(axes[2])
    fig.tight_layout()
    fig.savefig(HERE / "protect.png", dpi=150)
''',
    "trajectories": '''
if __name__ == "__main__":
    fig, ax = plt.subplots(figsize=(8, 5))
    density_panel(ax)
    for m in ("quantile", "ode"):
        trajectory_overlay(ax, m)
    fig.tight_layout()
    fig.savefig(HERE / "trajectories.png", dpi=150)
''',
    "evolve": '''
if __name__ == "__main__":
    fig, axes = plt.subplots(1, 2, figsize=(12, 4.5))
    density_panel(axes[0])
    frames_panel(axes[1])
    fig.tight_layout()
    fig.savefig(HERE / "evolve.png", dpi=150)
''',
}

_PLOT_PARTS = {
    "protect": (_PLOT_DENSITY, _PLOT_TRAJ, _PLOT_FRAMES, _PLOT_AVERAGES),
    "trajectories": (_PLOT_DENSITY, _PLOT_TRAJ),
    "evolve": (_PLOT_DENSITY, _PLOT_FRAMES),
}


def plot_kind(out_dir) -> str:
    """Which plot layout fits the files present in ``out_dir``."""
    out = Path(out_dir)
    if (out / "per_trajectory.csv").exists():
        return "protect"
    if (out / "trajectories.csv").exists():
        return "trajectories"
    if (out / "frames.csv").exists():
        return "evolve"
    raise FileNotFoundError(f"no plottable run files in {out}")


def plot_script_text(kind: str) -> str:
    return _PLOT_HEAD + "".join(_PLOT_PARTS[kind]) + _PLOT_MAIN[kind]


def emit_plot_script(out_dir) -> Path:
    """Write ``plot.py`` next to a run's data files and return its path."""
    path = Path(out_dir) / "plot.py"
    path.write_text(plot_script_text(plot_kind(out_dir)), encoding="utf-8")
    return path
