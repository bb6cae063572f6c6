import numpy as np
import pytest

from ctxrec.data import UserSequence, Vocabulary, count_train_frequencies, make_windows, split_by_user


def repetition_corpus(rng, n_users=200, n_events=60, n_items=50, lookback=8, p_repeat=0.9):
    """Each next item repeats one of the last `lookback` items with p_repeat."""
    seqs = []
    for u in range(n_users):
        items = [int(rng.integers(1, n_items + 1))]
        times = [0]
        t = 0
        for _ in range(1, n_events):
            if rng.random() < p_repeat:
                recent = items[-lookback:]
                items.append(recent[int(rng.integers(0, len(recent)))])
            else:
                items.append(int(rng.integers(1, n_items + 1)))
            t += int(rng.integers(60, 7200))
            times.append(t)
        seqs.append(UserSequence(u, items, times, user_id=f"u{u}"))
    return seqs


def recency_corpus(rng, n_users=120, n_events=40, n_items=50, p_repeat=0.5):
    """Next item repeats the immediately previous item with p_repeat."""
    seqs = []
    for u in range(n_users):
        items = [int(rng.integers(1, n_items + 1))]
        times = [0]
        t = 0
        for _ in range(1, n_events):
            if rng.random() < p_repeat:
                items.append(items[-1])
            else:
                items.append(int(rng.integers(1, n_items + 1)))
            t += int(rng.integers(600, 7200))
            times.append(t)
        seqs.append(UserSequence(u, items, times, user_id=f"u{u}"))
    return seqs


def toy_vocab(n_items):
    return Vocabulary(items=[f"i{i}" for i in range(1, n_items + 1)])


def all_windows(sequences, window=8, warm_start=5, time_unit="hours"):
    out = []
    for seq in sequences:
        out.extend(make_windows(seq, window, warm_start_min=warm_start, time_unit=time_unit))
    return out


def split_and_count(sequences, n_items, seed=0):
    vocab = toy_vocab(n_items)
    train, valid, test = split_by_user(sequences, seed=seed)
    count_train_frequencies(vocab, train)
    return train, valid, test, vocab


def write_tsv(path, sequences, item_prefix="i"):
    """Serialize sequences back to the TSV event-log format."""
    lines = ["# user_id\titem_id\ttimestamp"]
    for seq in sequences:
        uid = seq.user_id or f"u{seq.user_index}"
        for item, ts in zip(seq.items, seq.times):
            lines.append(f"{uid}\t{item_prefix}{item}\t{ts}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
