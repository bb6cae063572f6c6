"""Matplotlib rendering of report figures next to the delimited output."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_interval_histogram",
    "render_loss_history",
    "render_eval_report",
    "render_attention_windows",
]


def render_interval_histogram(path, rows, title="Successive-event time gaps"):
    fig, ax = plt.subplots(figsize=(6, 4))
    if rows:
        centers = [np.sqrt(max(lo, 0.5) * hi) for lo, hi, _ in rows]
        widths = [hi - lo for lo, hi, _ in rows]
        counts = [c for _, _, c in rows]
        ax.bar(centers, counts, width=widths, align="center", edgecolor="black")
        ax.set_xscale("log")
    ax.set_xlabel("gap (seconds, log scale)")
    ax.set_ylabel("count")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss_history(path, history):
    fig, ax1 = plt.subplots(figsize=(6, 4))
    epochs = [row["epoch"] for row in history]
    ax1.plot(epochs, [row["train_loss"] for row in history], "o-", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    recalls = [row["valid_recall_at_5"] for row in history]
    if any(np.isfinite(r) for r in recalls):
        ax2 = ax1.twinx()
        ax2.plot(epochs, recalls, "s--", color="tab:green", label="valid recall@5")
        ax2.set_ylabel("valid recall@5")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_eval_report(path, reports, ks):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    names = [r.model_id for r in reports]
    x = np.arange(len(ks))
    width = 0.8 / max(len(reports), 1)
    for metric, ax in zip(("recall", "mrr"), axes):
        for i, r in enumerate(reports):
            values = [getattr(r, metric)[k] for k in ks]
            ax.bar(x + i * width, values, width=width, label=names[i])
        ax.set_xticks(x + width * (len(reports) - 1) / 2)
        ax.set_xticklabels([f"@{k}" for k in ks])
        ax.set_title(metric)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_attention_windows(path, dumps, max_windows=3):
    """Grouped bars of the three stage scores (z-scored) per window."""
    n = min(len(dumps), max_windows)
    fig, axes = plt.subplots(1, max(n, 1), figsize=(5 * max(n, 1), 4), squeeze=False)
    for wi in range(n):
        rows = dumps[wi]
        ax = axes[0][wi]
        x = np.arange(len(rows))
        ax.bar(x - 0.25, [r["alpha_z"] for r in rows], width=0.25, label="content")
        ax.bar(x, [r["beta_c_z"] for r in rows], width=0.25, label="temporal")
        ax.bar(x + 0.25, [r["gamma_z"] for r in rows], width=0.25, label="combined")
        ax.set_xticks(x)
        ax.set_xticklabels(
            [f"{r['item_id']}\n{r['interval']:.1f}" for r in rows], fontsize=7
        )
        ax.set_title(f"window {wi}")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
