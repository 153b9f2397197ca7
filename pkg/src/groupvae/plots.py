"""Figure rendering for run reports.

Every report-producing command drops a PNG next to its delimited output.
Figures are presentation artifacts only; nothing reads them back.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

DPI = 150


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_histories(fold_histories, path) -> Path:
    """Training and validation loss per epoch, one panel per fold."""
    count = len(fold_histories)
    fig, axes = plt.subplots(1, count, figsize=(3.2 * count, 2.8), squeeze=False)
    for ax, (fold, history) in zip(axes[0], fold_histories):
        epochs = range(history.epochs_run)
        ax.plot(epochs, history.train_loss, label="train", lw=1.0)
        ax.plot(epochs, history.valid_loss, label="valid", lw=1.0)
        ax.axvline(history.best_epoch, color="gray", ls=":", lw=0.8)
        ax.set_title(f"fold {fold}", fontsize=9)
        ax.set_xlabel("epoch", fontsize=8)
        ax.tick_params(labelsize=7)
    axes[0][0].set_ylabel("loss", fontsize=8)
    axes[0][-1].legend(fontsize=7)
    return _finish(fig, path)


def plot_fold_accuracies(fold_accuracies, path) -> Path:
    """Per-fold downstream balanced accuracies as strip + mean bars."""
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    for fold, accs in fold_accuracies:
        ax.scatter([fold] * len(accs), accs, s=14, alpha=0.6, color="tab:blue")
        ax.scatter([fold], [sum(accs) / len(accs)], marker="_", s=400, color="tab:red")
    ax.set_xlabel("fold")
    ax.set_ylabel("balanced accuracy")
    ax.set_xticks([fold for fold, _ in fold_accuracies])
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def plot_masking_curve(drop_counts, means, stds, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.errorbar(drop_counts, means, yerr=stds, marker="o", ms=4, capsize=3, lw=1.2)
    ax.set_xlabel("feature groups dropped")
    ax.set_ylabel("balanced accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def plot_tc_per_fold(folds, values, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.bar([str(f) for f in folds], values, color="tab:blue", width=0.6)
    ax.set_xlabel("fold")
    ax.set_ylabel("total correlation")
    ax.grid(alpha=0.3, axis="y")
    return _finish(fig, path)


def plot_expert_sweep(expert_counts, means, stds, baseline_mean, path) -> Path:
    """Accuracy by expert count with the single-network baseline marked."""
    fig, ax = plt.subplots(figsize=(4.6, 3.0))
    ax.errorbar(expert_counts, means, yerr=stds, marker="o", ms=4, capsize=3, lw=1.2)
    ax.axhline(baseline_mean, color="tab:red", ls="--", lw=1.0, label="1 expert")
    ax.set_xlabel("experts")
    ax.set_ylabel("balanced accuracy")
    ax.set_xticks(list(expert_counts))
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _finish(fig, path)
