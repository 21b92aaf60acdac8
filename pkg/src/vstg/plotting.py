"""Figures written next to the text reports produced by the CLI."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "figure.figsize": (4.5, 3.0),
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_latency(reports, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        x = [r.sample_ms for r in reports]
        ax.plot(x, [r.median_ms for r in reports], "o-", label="median")
        ax.plot(x, [r.p99_ms for r in reports], "s--", label="p99", alpha=0.7)
        ax.set_xlabel("sample length (ms)")
        ax.set_ylabel("inference time per window (ms)")
        ax.legend()
        return _save(fig, path)


def plot_training(logs: dict, path) -> Path:
    """``logs`` maps a run name to its :class:`~vstg.train.TrainLog`."""
    with plt.rc_context(RC):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(7.0, 3.0))
        for name, log in logs.items():
            epochs = [r.epoch for r in log.records]
            ax_loss.plot(epochs, log.train_losses, label=name)
            ax_acc.plot(epochs, log.val_accuracies, label=name)
            ax_acc.axvline(log.best_epoch, ls=":", lw=0.8, color="grey")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("train loss")
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("validation accuracy")
        ax_acc.legend()
        return _save(fig, path)


def plot_divergence(report, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        orders = sorted({order for _, order in report.divergence})
        width = 0.8 / max(len(orders), 1)
        for i, order in enumerate(orders):
            books = [b for b, o in sorted(report.divergence) if o == order]
            vals = [report.divergence[(b, order)] for b in books]
            ax.bar([b + (i - (len(orders) - 1) / 2) * width for b in books], vals, width,
                   label="unigram" if order == 1 else "bigram")
        ax.set_xticks([1, 2, 3], ["C1", "C2", "C3"])
        ax.set_ylabel("KL divergence (nats)")
        if orders:
            ax.legend()
        return _save(fig, path)


def plot_detections(dets: Sequence, threshold: float, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(7.0, 2.5))
        ax.plot([d.offset for d in dets], [d.prob for d in dets], lw=0.8)
        ax.axhline(threshold, color="red", ls="--", lw=0.8)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("window start (frame)")
        ax.set_ylabel("P(stego)")
        return _save(fig, path)
