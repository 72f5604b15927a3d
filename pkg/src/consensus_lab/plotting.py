"""Matplotlib figures written straight to SVG files.

SVG output is made byte-reproducible by fixing the hash salt used for element
ids and dropping the creation-date metadata.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGSIZE = (8, 6)  # 800x600 at dpi 100
DPI = 100
_STYLE = {
    "svg.hashsalt": "consensus-lab",
    "svg.fonttype": "path",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 11,
}


def save_figure(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(_STYLE):
        fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _new_axes():
    with matplotlib.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    return fig, ax


def _agent_lines(ax, t, values, step=False):
    for i in range(values.shape[1]):
        if step:
            ax.step(t, values[:, i], where="post", lw=1.0, label=f"agent {i + 1}")
        else:
            ax.plot(t, values[:, i], lw=1.2, label=f"agent {i + 1}")
    if values.shape[1] <= 12:
        ax.legend(loc="upper right", fontsize=8, ncol=2)


def plot_agent_series(t, values, ylabel, title, path, step=False):
    """One line per agent; ``step=True`` draws held (sample-and-hold) values."""
    with matplotlib.rc_context(_STYLE):
        fig, ax = _new_axes()
        _agent_lines(ax, np.asarray(t), np.asarray(values), step)
        ax.set_xlabel("time [s]")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        fig.tight_layout()
        return save_figure(fig, path)


def plot_trajectory(traj, out_dir, prefix=""):
    """Positions and velocities of every agent; returns the two file paths."""
    out_dir = Path(out_dir)
    return [
        plot_agent_series(traj.times, traj.positions, "position x_i", "Agent positions",
                          out_dir / f"{prefix}positions.svg"),
        plot_agent_series(traj.times, traj.velocities, "velocity v_i", "Agent velocities",
                          out_dir / f"{prefix}velocities.svg"),
    ]


def plot_sampled(sampled, out_dir, prefix=""):
    """Values transmitted at the sampling instants, drawn as held steps."""
    out_dir = Path(out_dir)
    return [
        plot_agent_series(sampled.times, sampled.positions, "sampled position x_i(t_k)",
                          "Transmitted positions", out_dir / f"{prefix}sampled_positions.svg", step=True),
        plot_agent_series(sampled.times, sampled.velocities, "sampled velocity v_i(t_k)",
                          "Transmitted velocities", out_dir / f"{prefix}sampled_velocities.svg", step=True),
    ]


def plot_region(region, path):
    """Certified ``tau_star`` against ``lambda_bar`` with the region below shaded."""
    lam, tau = region.lambda_bars, region.tau_stars
    with matplotlib.rc_context(_STYLE):
        fig, ax = _new_axes()
        ax.fill_between(lam, 0.0, tau, color="tab:blue", alpha=0.25, label="certified region")
        ax.plot(lam, tau, "o-", color="tab:blue", lw=1.5)
        fragile = [p for p in region.points if p.fragile]
        if fragile:
            ax.plot([p.lambda_bar for p in fragile], [p.tau_star for p in fragile], "x", color="tab:red",
                    ms=9, label="fragile")
        ax.set_xlabel("connectivity bound lambda_bar")
        ax.set_ylabel("max sampling interval tau_bar [s]")
        ax.set_title(f"Certified stability region (kp={region.gains.kp:g}, kd={region.gains.kd:g})")
        ax.set_xlim(min(lam.min(), 0.0), 1.0)
        ax.set_ylim(bottom=0.0)
        ax.legend(loc="upper right")
        fig.tight_layout()
        return save_figure(fig, path)


def plot_metrics(metrics, path):
    """Disagreement series on a log scale."""
    with matplotlib.rc_context(_STYLE):
        fig, ax = _new_axes()
        floor = 1e-300
        ax.semilogy(metrics.times, np.maximum(metrics.position_spread, floor), label="max |x_i - x_j|")
        ax.semilogy(metrics.times, np.maximum(metrics.velocity_spread, floor), label="max |v_i - v_j|")
        ax.semilogy(metrics.times, np.maximum(metrics.max_speed, floor), label="max |v_i|")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("disagreement")
        ax.legend(loc="upper right")
        fig.tight_layout()
        return save_figure(fig, path)
