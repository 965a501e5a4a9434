"""Render figures from a finished run directory.

Reads the delimited trace emitted by a training run and writes PNG figures
next to it: per-domain loss curves with the worst-case envelope, the
adversarial weight trajectories, loss discrepancy and weight drift for the
tracked pair, and step/gradient diagnostics.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import InvalidInputError

FIGURE_DPI = 150


def _load_trace(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(cell) for cell in row] for row in reader]
    if not rows:
        raise InvalidInputError(f"{path} has no data rows")
    data = np.array(rows)
    columns = {name: data[:, i] for i, name in enumerate(header)}
    loss_names = [name for name in header if name.startswith("loss_d")]
    p_names = [name for name in header if name.startswith("p_")]
    return columns, loss_names, p_names


def _new_axes(ylabel, title):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)


def render_run_report(run_dir, out_dir=None) -> list[Path]:
    """Write the figures for ``run_dir`` and return the created paths."""
    run_dir = Path(run_dir)
    trace_path = run_dir / "trace.csv"
    if not trace_path.exists():
        raise InvalidInputError(f"no trace.csv under {run_dir}")
    out_dir = Path(out_dir) if out_dir is not None else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    columns, loss_names, p_names = _load_trace(trace_path)
    t = columns["t"]
    written = []

    fig, ax = _new_axes("minibatch loss", "Per-domain training loss")
    losses = np.stack([columns[name] for name in loss_names])
    for name, series in zip(loss_names, losses):
        ax.plot(t, series, label=name.replace("loss_d", "domain "), linewidth=1.0)
    ax.plot(t, losses.max(axis=0), color="black", linestyle="--",
            label="worst case", linewidth=1.5)
    ax.legend(fontsize=8)
    path = out_dir / "losses.png"
    _save(fig, path)
    written.append(path)

    fig, ax = _new_axes("weight", "Adversarial domain weights")
    for name in p_names:
        ax.plot(t, columns[name], label=name, linewidth=1.0)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    path = out_dir / "weights.png"
    _save(fig, path)
    written.append(path)

    if len(loss_names) >= 2:
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
        ax1.plot(t, columns[loss_names[0]] - columns[loss_names[1]], linewidth=1.0)
        ax1.set_ylabel("loss discrepancy")
        ax1.grid(True, alpha=0.3)
        ax1.set_title("Domain 0 minus domain 1")
        ax2.plot(t, columns[p_names[0]] - columns[p_names[1]], linewidth=1.0, color="tab:red")
        ax2.set_ylabel("weight drift")
        ax2.set_xlabel("iteration")
        ax2.grid(True, alpha=0.3)
        path = out_dir / "discrepancy_drift.png"
        _save(fig, path)
        written.append(path)

    fig, ax = _new_axes("value", "Optimization diagnostics")
    ax.semilogy(t, np.maximum(columns["grad_norm"], 1e-300), label="gradient norm")
    positive_eta = columns["eta_p"] > 0
    if positive_eta.any():
        ax.semilogy(t[positive_eta], columns["eta_p"][positive_eta],
                    label="distribution step", linestyle="--")
    ax.legend(fontsize=8)
    path = out_dir / "diagnostics.png"
    _save(fig, path)
    written.append(path)
    return written
