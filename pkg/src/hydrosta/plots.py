"""SVG panels for simulation traces (matplotlib, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps the SVG bytes independent of the run date
_SVG_META = {"Date": None, "Creator": "hydrosta"}
plt.rcParams["svg.hashsalt"] = "hydrosta"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_trace(trace, path, title: str = "") -> Path:
    """Three stacked panels: position and error, pressure and control, sliding variable."""
    t = trace["t"]
    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    ax = axes[0]
    ax.plot(t, trace["r"], "k--", lw=1, label="r")
    ax.plot(t, trace["q_true"], lw=1, label="q")
    ax.set_ylabel("position [m]")
    ax2 = ax.twinx()
    ax2.plot(t, trace["q_true"] - trace["r"], color="tab:red", lw=0.6, label="e1")
    ax2.set_ylabel("error [m]", color="tab:red")
    ax.legend(loc="upper left")
    ax = axes[1]
    ax.plot(t, trace["P_true"] / 1e5, lw=0.8, label="P")
    ax.set_ylabel("load pressure [bar]")
    ax2 = ax.twinx()
    ax2.plot(t, trace["u"], color="tab:green", lw=0.6, label="u")
    ax2.set_ylabel("control u [-]", color="tab:green")
    ax = axes[2]
    ax.plot(t, trace["s"], lw=0.6)
    ax.set_ylabel("sliding variable s")
    ax.set_xlabel("time [s]")
    for a in axes:
        a.grid(True, alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_overlay(traces, labels, path, title: str = "") -> Path:
    """Overlay tracking error and control of several runs on a shared time axis."""
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for tr, lab in zip(traces, labels):
        axes[0].plot(tr["t"], tr["q_true"] - tr["r"], lw=0.7, label=lab)
        axes[1].plot(tr["t"], tr["u"], lw=0.7, label=lab)
    axes[0].set_ylabel("error [m]")
    axes[1].set_ylabel("control u [-]")
    axes[1].set_xlabel("time [s]")
    for a in axes:
        a.grid(True, alpha=0.3)
        a.legend(loc="upper right")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep(traces, values, path, name: str = "rho") -> Path:
    """Step responses and controls for a parameter sweep."""
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for tr, v in zip(traces, values):
        axes[0].plot(tr["t"], tr["q_true"], lw=0.8, label=f"{name} = {v:g}")
        axes[1].plot(tr["t"], tr["u"], lw=0.6, label=f"{name} = {v:g}")
    if traces:
        axes[0].plot(traces[0]["t"], traces[0]["r"], "k--", lw=1, label="r")
    axes[0].set_ylabel("position [m]")
    axes[1].set_ylabel("control u [-]")
    axes[1].set_xlabel("time [s]")
    for a in axes:
        a.grid(True, alpha=0.3)
        a.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_reduced_sta(rt, path) -> Path:
    fig, axes = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    axes[0].plot(rt.t, rt.s, lw=0.8)
    axes[0].set_ylabel("s")
    axes[1].plot(rt.t, rt.z, lw=0.8)
    axes[1].plot(rt.t, np.asarray(rt.delta), lw=0.5, alpha=0.6)
    axes[1].set_ylabel("z, delta_z")
    axes[1].set_xlabel("time [s]")
    fig.tight_layout()
    return _save(fig, path)
