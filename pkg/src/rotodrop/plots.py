"""Figure rendering for the report paths.

Every plot function takes a result object and a target path and writes a
static image next to the delimited output.  Rendering is optional at the
CLI level (--no-figures) and never feeds back into the numbers.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

ARM_COLORS = {"none": "black", "general": "tab:blue", "proposed": "tab:red"}


def _mean_curves(runs):
    """Mean train/test accuracy per epoch across a list of TrialResults."""
    train = np.mean([[m.train_accuracy for m in r.history] for r in runs], axis=0)
    test = np.mean([[m.test_accuracy for m in r.history] for r in runs], axis=0)
    return train, test


def save_study_figure(result, path, dpi=150) -> str:
    """Accuracy-vs-epoch curves per arm (train solid, test dashed)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for arm in result.spec.arms:
        runs = [r for r in result.trials if r.arm == arm]
        if not runs:
            continue
        train, test = _mean_curves(runs)
        epochs = np.arange(1, len(train) + 1)
        color = ARM_COLORS.get(arm, None)
        ax.plot(epochs, train, "-", color=color, label=f"{arm} (train)")
        ax.plot(epochs, test, "--", color=color, label=f"{arm} (test)")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(f"{result.spec.name}: mean of {result.spec.trials} trials")
    ax.legend(fontsize=8, ncol=len(result.spec.arms))
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return str(path)


def save_sweep_figure(result, path, dpi=150) -> str:
    """Final test accuracy vs constant rotate amount, with trial spread."""
    rs = [row[0] for row in result.summary]
    means = [row[1] for row in result.summary]
    sds = [row[2] for row in result.summary]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(rs, means, yerr=sds, fmt="o-", color="tab:red", capsize=3)
    ax.set_xlabel("rotate amount r")
    ax.set_ylabel("final test accuracy")
    ax.set_title(f"rotation dropout across r ({result.spec.trials} trials each)")
    if rs and min(rs) >= 1:
        ax.set_xscale("log", base=2)
        ax.set_xticks(rs)
        ax.set_xticklabels([str(r) for r in rs])
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return str(path)


def save_mask_stats_figure(report, path, dpi=150) -> str:
    """Per-position keep frequency bars plus the pairwise co-keep matrix."""
    n = report.per_position_keep.size
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4),
                                   gridspec_kw={"width_ratios": [1.4, 1.0]})
    ax1.bar(np.arange(n), report.per_position_keep, color="tab:blue", width=0.8)
    ax1.axhline(report.overall_keep, color="tab:red", linestyle="--",
                label=f"overall {report.overall_keep:.3f}")
    ax1.set_xlabel("mask position")
    ax1.set_ylabel("keep frequency")
    ax1.set_ylim(0.0, 1.0)
    ax1.legend(fontsize=8)
    im = ax2.imshow(report.co_keep, vmin=0.0, vmax=1.0, cmap="viridis")
    ax2.set_xlabel("position")
    ax2.set_ylabel("position")
    ax2.set_title("pairwise co-keep frequency", fontsize=10)
    fig.colorbar(im, ax=ax2, fraction=0.046)
    fig.suptitle(f"{report.config.kind.value}, n={report.config.n}, "
                 f"{report.sample_count} masks", fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return str(path)


def render_figures(result, outdir, dpi=150) -> list:
    """Render the figure(s) appropriate to a result type; returns paths."""
    from .experiments import MaskStatsReport, OverfitStudyResult, RSweepResult

    written = []
    if isinstance(result, OverfitStudyResult):
        written.append(save_study_figure(result, os.path.join(outdir, "accuracy.png"), dpi))
    elif isinstance(result, RSweepResult):
        written.append(save_sweep_figure(result, os.path.join(outdir, "sweep.png"), dpi))
    elif isinstance(result, MaskStatsReport):
        written.append(save_mask_stats_figure(
            result, os.path.join(outdir, "mask_stats.png"), dpi))
    else:
        raise TypeError(f"cannot render figures for {type(result).__name__}")
    return written
