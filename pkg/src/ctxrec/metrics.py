"""Ranking metrics and the evaluation harness over test sequences."""

from dataclasses import dataclass, field

import numpy as np

from .data import PAD_INDEX, TIME_UNITS, make_windows
from .model import Model, build_batch

__all__ = [
    "EvaluationError",
    "EvalReport",
    "recall_at_k",
    "mrr_at_k",
    "ranks_from_scores",
    "model_ranks",
    "evaluate",
    "DEFAULT_KS",
]

DEFAULT_KS = (1, 5, 10, 20)


class EvaluationError(ValueError):
    pass


@dataclass
class EvalReport:
    model_id: str
    sample_count: int
    recall: dict[int, float] = field(default_factory=dict)
    mrr: dict[int, float] = field(default_factory=dict)

    def as_dict(self):
        return {
            "model": self.model_id,
            "samples": self.sample_count,
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
            "mrr": {str(k): v for k, v in sorted(self.mrr.items())},
        }


def recall_at_k(ranks, k):
    """Fraction of samples whose target ranked within the top k."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise EvaluationError("recall_at_k: no ranks")
    if k < 1:
        raise EvaluationError(f"recall_at_k: k must be >= 1, got {k}")
    return float((ranks <= k).mean())


def mrr_at_k(ranks, k):
    """Mean reciprocal rank, zero when the rank exceeds k."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise EvaluationError("mrr_at_k: no ranks")
    if k < 1:
        raise EvaluationError(f"mrr_at_k: k must be >= 1, got {k}")
    rr = np.where(ranks <= k, 1.0 / ranks, 0.0)
    return float(rr.mean())


def ranks_from_scores(scores, targets):
    """1-based rank of each target among items 1..N, descending score,
    ties broken by ascending item index. scores is (B, N+1); the padding
    column is ignored."""
    scores = np.asarray(scores, dtype=float)
    targets = np.asarray(targets)
    body = scores[:, 1:]
    target_scores = scores[np.arange(len(targets)), targets][:, None]
    idx = np.arange(1, scores.shape[1])[None, :]
    higher = (body > target_scores).sum(axis=1)
    tied_before = ((body == target_scores) & (idx < targets[:, None])).sum(axis=1)
    return higher + tied_before + 1


def model_ranks(model: Model, windows, batch_size=256):
    """Full-corpus target ranks for the model over window samples."""
    ranks = []
    for i in range(0, len(windows), batch_size):
        chunk = windows[i : i + batch_size]
        batch = build_batch(chunk, model.config)
        result = model.forward(batch, training=False)
        scores = model.score_all_items(result.x_hat.values)
        ranks.extend(ranks_from_scores(scores, batch.targets))
    return np.asarray(ranks)


def _report(model_id, ranks, ks):
    report = EvalReport(model_id=model_id, sample_count=len(ranks))
    for k in ks:
        report.recall[k] = recall_at_k(ranks, k)
        report.mrr[k] = mrr_at_k(ranks, k)
    return report


def evaluate(subject, test_sequences, *, warm_start=5, ks=DEFAULT_KS, model_id=None):
    """Full-corpus evaluation of a Model or a baseline scorer.

    A baseline scorer is a callable(prefix_items) -> score array over the
    full index space (length N+1); the padding column is ignored. Models
    consume fixed windows built from each prefix under their own config.
    """
    if isinstance(subject, Model):
        cfg = subject.config
        windows = []
        for seq in test_sequences:
            windows.extend(
                make_windows(seq, cfg.window, warm_start_min=warm_start, time_unit=cfg.time_unit)
            )
        if not windows:
            raise EvaluationError("evaluate: no test windows after warm start")
        ranks = model_ranks(subject, windows)
        return _report(model_id or "model", ranks, ks)

    ranks = []
    for seq in test_sequences:
        for p in range(warm_start, len(seq.items)):
            scores = np.asarray(subject(seq.items[:p]), dtype=float)
            scores = scores.copy()
            scores[PAD_INDEX] = -np.inf
            ranks.append(ranks_from_scores(scores[None, :], [seq.items[p]])[0])
    if not ranks:
        raise EvaluationError("evaluate: no test samples after warm start")
    return _report(model_id or getattr(subject, "name", "scorer"), np.asarray(ranks), ks)
