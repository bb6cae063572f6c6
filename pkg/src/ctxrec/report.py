"""Delimited/JSON output writers and the per-window attention dump."""

import csv
import json

import numpy as np

from .model import Model, build_batch

__all__ = [
    "attention_dump",
    "write_attention_csv",
    "write_histogram_csv",
    "write_json",
    "write_loss_history_csv",
    "eval_table",
]

REPORT_FORMAT_VERSION = 1


def _zscores(values):
    values = np.asarray(values, dtype=float)
    std = values.std()
    if std == 0:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def attention_dump(model: Model, windows, vocab):
    """Per-window rows of raw and z-scored stage outputs for real positions.

    Returns a list of windows, each a list of row dicts with keys
    position, interval, item_id, alpha, beta_c, gamma, alpha_z, beta_c_z,
    gamma_z. Z-scores are taken across the window's real positions.
    """
    batch = build_batch(windows, model.config)
    result = model.forward(batch, training=False)
    alpha = result.alpha.values[:, :, 0]
    beta_c = result.beta_c.values[:, :, 0]
    gamma = result.gamma.values[:, :, 0]

    dumps = []
    for i, w in enumerate(windows):
        real = [j for j, pad in enumerate(w.pad_mask) if not pad]
        a, bc, g = alpha[i, real], beta_c[i, real], gamma[i, real]
        az, bcz, gz = _zscores(a), _zscores(bc), _zscores(g)
        rows = []
        for r, j in enumerate(real):
            rows.append(
                {
                    "position": j,
                    "interval": w.intervals[j],
                    "item_id": vocab.item_of(w.item_indices[j]),
                    "alpha": a[r],
                    "beta_c": bc[r],
                    "gamma": g[r],
                    "alpha_z": az[r],
                    "beta_c_z": bcz[r],
                    "gamma_z": gz[r],
                }
            )
        dumps.append(rows)
    return dumps


ATTENTION_COLUMNS = [
    "window", "position", "interval", "item_id",
    "alpha", "beta_c", "gamma", "alpha_z", "beta_c_z", "gamma_z",
]


def write_attention_csv(path, dumps):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ATTENTION_COLUMNS)
        for wi, rows in enumerate(dumps):
            for row in rows:
                writer.writerow(
                    [wi, row["position"], f"{row['interval']:.6f}", row["item_id"]]
                    + [f"{row[key]:.12g}" for key in ATTENTION_COLUMNS[4:]]
                )


def write_histogram_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bucket_low", "bucket_high", "count"])
        for lo, hi, count in rows:
            writer.writerow([f"{lo:.10g}", f"{hi:.10g}", count])


def write_loss_history_csv(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss", "valid_recall_at_5"])
        for row in history:
            writer.writerow(
                [row["epoch"], f"{row['lr']:.10g}", f"{row['train_loss']:.12g}",
                 f"{row['valid_recall_at_5']:.12g}"]
            )


def write_json(path, document, config_echo=None):
    payload = {"format_version": REPORT_FORMAT_VERSION}
    if config_echo is not None:
        payload["config"] = config_echo
    payload.update(document)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def eval_table(reports, ks):
    """Aligned text table: rows are metrics, columns are methods."""
    names = [r.model_id for r in reports]
    width = max(12, *(len(n) + 2 for n in names))
    lines = ["".join(["metric".ljust(14)] + [n.rjust(width) for n in names])]
    for k in ks:
        lines.append(
            "".join(
                [f"recall@{k}".ljust(14)]
                + [f"{r.recall[k]:.4f}".rjust(width) for r in reports]
            )
        )
    for k in ks:
        lines.append(
            "".join(
                [f"mrr@{k}".ljust(14)] + [f"{r.mrr[k]:.4f}".rjust(width) for r in reports]
            )
        )
    return "\n".join(lines)
