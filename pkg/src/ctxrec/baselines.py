"""Heuristic baselines: global popularity, user-prefix popularity, and a
first-order transition model, all returning full-index score arrays."""

import numpy as np

from .data import PAD_INDEX

__all__ = ["baseline_pop", "baseline_spop", "baseline_markov", "BASELINES"]


def _train_counts(train_sequences, n_items):
    counts = np.zeros(n_items + 1)
    for seq in train_sequences:
        for item in seq.items:
            counts[item] += 1
    return counts


def baseline_pop(train_sequences, n_items):
    """Static scorer: training-set occurrence counts."""
    counts = _train_counts(train_sequences, n_items)

    def scorer(prefix_items):
        return counts.copy()

    scorer.name = "pop"
    return scorer


def baseline_spop(train_sequences, n_items):
    """Prefix-popularity scorer: count in the user's observed prefix, with
    global popularity as tie-break (then ascending item index, applied by
    the evaluator). The composite score keeps both counts exactly
    comparable because the popularity term is scaled below 1."""
    pop = _train_counts(train_sequences, n_items)
    pop_frac = pop / (pop.max() + 1.0)

    def scorer(prefix_items):
        scores = pop_frac.copy()
        for item in prefix_items:
            scores[item] += 1.0
        return scores

    scorer.name = "spop"
    return scorer


def baseline_markov(train_sequences, n_items):
    """First-order transition scorer: P(next | last) from training bigram
    counts, no smoothing; an unseen last item falls back to popularity."""
    pop = _train_counts(train_sequences, n_items)
    bigrams = {}
    for seq in train_sequences:
        for a, b in zip(seq.items, seq.items[1:]):
            row = bigrams.setdefault(a, np.zeros(n_items + 1))
            row[b] += 1

    def scorer(prefix_items):
        last = prefix_items[-1] if prefix_items else PAD_INDEX
        row = bigrams.get(last)
        if row is None or row.sum() == 0:
            return pop.copy()
        return row / row.sum()

    scorer.name = "markov"
    return scorer


BASELINES = {"pop": baseline_pop, "spop": baseline_spop, "markov": baseline_markov}
