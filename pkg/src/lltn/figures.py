"""matplotlib renderers for the report paths: metric bars, loss traces,
affect histograms, nod/punctuation tables, and the history sweep."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsReport
from .synth import AffectHistogram, NodStats


def save_metrics_bars(report: MetricsReport, path, title: str = "evaluation") -> None:
    names, values, errs = [], [], []
    for attr, label in report._COLUMNS:
        mv = getattr(report, attr)
        if mv is None:
            continue
        names.append(label)
        values.append(mv.value)
        errs.append(mv.se)
    fig, ax = plt.subplots(figsize=(1.2 * len(names) + 2, 4))
    ax.bar(range(len(names)), values, yerr=errs, capsize=3, color="#4878cf")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_trace(trace: np.ndarray, path, title: str = "training loss", smooth: int = 50) -> None:
    trace = np.asarray(trace, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(trace, alpha=0.3, label="per step")
    if trace.size >= smooth > 1:
        kernel = np.ones(smooth) / smooth
        ax.plot(
            np.arange(smooth - 1, trace.size),
            np.convolve(trace, kernel, mode="valid"),
            label=f"mean({smooth})",
        )
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_affect_histograms(hist: AffectHistogram, path, title: str = "listener affect") -> None:
    centers = (hist.bin_edges[:-1] + hist.bin_edges[1:]) / 2
    width = hist.bin_edges[1] - hist.bin_edges[0]
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    axes[0].bar(centers, hist.positive_counts, width=width * 0.9, color="#2ca02c")
    axes[0].set_title("top positive phrases")
    axes[1].bar(centers, hist.negative_counts, width=width * 0.9, color="#d62728")
    axes[1].set_title("top negative phrases")
    for ax in axes:
        ax.set_xlabel("affect")
        ax.set_xlim(-1.05, 1.05)
    axes[0].set_ylabel("phrases")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_nod_stats(stats: NodStats, path, title: str = "nods vs punctuation") -> None:
    labels = [row[0] for row in stats.rows]
    nod = [row[1] * 100 for row in stats.rows]
    plain = [row[2] * 100 for row in stats.rows]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(1.1 * len(labels) + 2.5, 4))
    ax.bar(x - 0.2, nod, width=0.4, label=f"nod (n={stats.nod_count})", color="#4878cf")
    ax.bar(x + 0.2, plain, width=0.4, label=f"plain (n={stats.plain_count})", color="#bbbbbb")
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylabel("% with marker in preceding 5 tokens")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_history_sweep(
    reports: Mapping[float, MetricsReport], path, title: str = "history length sweep"
) -> None:
    hs = sorted(reports)
    vals = [reports[h].l2_affect.value for h in hs]
    errs = [reports[h].l2_affect.se for h in hs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(hs, vals, yerr=errs, marker="o", capsize=3)
    ax.set_xlabel("history window (s)")
    ax.set_ylabel("L2 Affect (10^2)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
