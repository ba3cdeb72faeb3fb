"""Figure rendering for the CLI report paths.

Each function draws one figure from the in-memory result objects and
saves it next to the delimited output; nothing is ever shown
interactively.  The CSV files remain the canonical data products.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .estimate import DwellHistogram, LikelihoodGrid, dwell_pdf
from .sensor import CountRecord, current_from_counts
from .smoother import SmoothedTimeline
from .trajectory import TrajectoryRecord

__all__ = [
    "save_trajectory_figure",
    "save_counts_figure",
    "save_timeline_figure",
    "save_likelihood_figure",
    "save_rates_figure",
    "save_dwell_figure",
]


def _shade_occupied(ax, times, n):
    ax.fill_between(times, 0, 1, where=n > 0, color="tab:red", alpha=0.25,
                    linewidth=0, transform=ax.get_xaxis_transform(),
                    label="dot occupied")


def save_trajectory_figure(path: Path | str, traj: TrajectoryRecord,
                           max_points: int = 20000) -> Path:
    """Spin-up population with the occupied intervals shaded."""
    path = Path(path)
    stride = max(1, traj.p_up.shape[0] // max_points)
    t = traj.times[::stride]
    fig, ax = plt.subplots(figsize=(9, 3))
    _shade_occupied(ax, t, traj.n[::stride])
    ax.plot(t, traj.p_up[::stride], color="tab:blue", lw=0.8,
            label="spin-up population")
    ax.set_xlabel("t [us]")
    ax.set_ylabel("population")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_counts_figure(path: Path | str, record: CountRecord,
                       max_points: int = 20000) -> Path:
    """QPC current trace and the count histogram."""
    path = Path(path)
    current = current_from_counts(record.counts, record.bin_dt)
    stride = max(1, record.n_bins // max_points)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3),
                                   gridspec_kw={"width_ratios": [3, 1]})
    ax1.plot(record.times[::stride], current[::stride], lw=0.5,
             color="tab:blue")
    ax1.set_xlabel("t [us]")
    ax1.set_ylabel("I_QPC [nA]")
    ax2.hist(record.counts, bins=60, color="tab:blue", alpha=0.8)
    ax2.set_xlabel("counts per bin")
    ax2.set_ylabel("bins")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_timeline_figure(path: Path | str, timeline: SmoothedTimeline,
                         max_points: int = 20000) -> Path:
    """Filtered (upper) and smoothed (lower) occupation probability."""
    path = Path(path)
    stride = max(1, timeline.p_pqs.shape[0] // max_points)
    t = timeline.times[::stride]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 4.5), sharex=True)
    ax1.plot(t, timeline.p_filter[::stride], lw=0.6, color="tab:blue")
    ax1.set_ylabel("P_occ (filter)")
    ax1.set_ylim(-0.02, 1.02)
    ax2.plot(t, timeline.p_pqs[::stride], lw=0.6, color="tab:blue")
    ax2.set_ylabel("P_occ (smoothed)")
    ax2.set_ylim(-0.02, 1.02)
    ax2.set_xlabel("t [us]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_likelihood_figure(path: Path | str, grid_result: LikelihoodGrid) -> Path:
    """Evolution of the normalized candidate likelihood over time."""
    path = Path(path)
    snaps = grid_result.snapshots
    # normalize each snapshot row for display
    z = snaps - snaps.max(axis=1, keepdims=True)
    like = np.exp(np.clip(z, -60, 0))
    like /= like.sum(axis=1, keepdims=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    extent = (grid_result.grid[0], grid_result.grid[-1],
              grid_result.snapshot_times[0], grid_result.snapshot_times[-1])
    im = ax.imshow(like, aspect="auto", origin="lower", extent=extent,
                   cmap="viridis")
    ax.axvline(grid_result.omega_hat, color="w", ls="--", lw=0.8)
    ax.set_xlabel("candidate Rabi frequency [rad/us]")
    ax.set_ylabel("t [us]")
    fig.colorbar(im, ax=ax, label="normalized likelihood")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_rates_figure(path: Path | str, history) -> Path:
    """Re-estimated rates as a function of the iteration index."""
    path = Path(path)
    gd = [h["gamma_down"] for h in history]
    gu = [h["gamma_up"] for h in history]
    it = np.arange(1, len(gd) + 1)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(it, gd, "o-", label="gamma_down")
    ax.plot(it, gu, "s-", label="gamma_up")
    ax.set_xlabel("iteration")
    ax.set_ylabel("rate [1/us]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_dwell_figure(path: Path | str, hist: DwellHistogram,
                      fit: tuple[float, float, float] | None = None) -> Path:
    """Occupied dwell-time histogram with the fitted density overlaid."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    widths = np.diff(hist.bin_edges)
    total = max(hist.counts.sum(), 1)
    density = hist.counts / (total * widths)
    ax.bar(hist.bin_edges[:-1], density, width=widths, align="edge",
           color="tab:blue", alpha=0.7, label="smoothed-timeline dwells")
    if fit is not None and hist.occupied_durations.size:
        omega_hat, gamma_up_hat, gamma_down_hat = fit
        tt = np.linspace(0, hist.bin_edges[-1], 400)
        ax.plot(tt, dwell_pdf(tt, omega_hat, gamma_up_hat, gamma_up_hat),
                color="tab:red", lw=1.5,
                label=f"fit: omega={omega_hat:.2f} rad/us")
    ax.set_xlabel("occupied dwell time [us]")
    ax.set_ylabel("probability density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
