"""Matplotlib figure rendering for reports, slices and training traces."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_report_figure(report, path) -> None:
    """Bar chart of the task metrics next to the delimited report files."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    axes[0].bar(["success rate"], [report.success_rate], color="tab:green")
    axes[0].set_ylim(0, 1)
    axes[0].set_title(f"{report.task}: {report.trials} trials")
    labels = ["t err [mm]", "r err [deg]"]
    vals = [1000 * report.mean_t_err, np.degrees(report.mean_r_err)]
    if report.cleared is not None:
        labels += ["cleared", "dropped"]
        vals += [report.cleared, report.dropped]
    axes[1].bar(labels, vals, color="tab:blue")
    axes[1].set_title(f"config {report.config_digest}")
    axes[1].tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss_curve(losses, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(np.arange(len(losses)), losses)
    ax.set_xlabel("epoch")
    ax.set_ylabel("weighted cross-entropy")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_slice_heatmap(grid, meta, path) -> None:
    fig, ax = plt.subplots(figsize=(4.4, 3.6))
    e = meta["extent"]
    im = ax.imshow(
        grid, origin="lower", extent=[-e, e, -e, e], cmap="inferno", vmin=0.0, vmax=1.0
    )
    ax.set_xlabel(meta["column_coordinate"])
    ax.set_ylabel(meta["row_coordinate"])
    ax.set_title("grasp value slice")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
