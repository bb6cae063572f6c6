"""Event-log ingestion, filtering, windowing, splits, and negative sampling."""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Event",
    "UserSequence",
    "Vocabulary",
    "WindowSample",
    "FilterConfig",
    "DataError",
    "FormatError",
    "EmptyDatasetError",
    "SamplingError",
    "SplitError",
    "TIME_UNITS",
    "ingest",
    "preprocess",
    "split_by_user",
    "count_train_frequencies",
    "make_windows",
    "sample_negatives",
    "negative_seed",
    "interval_stats",
]

PAD_INDEX = 0

TIME_UNITS = {"seconds": 1.0, "minutes": 60.0, "hours": 3600.0, "days": 86400.0}


class DataError(ValueError):
    """Problem with the input data."""


class FormatError(DataError):
    """Event log does not parse."""


class EmptyDatasetError(DataError):
    """Filtering removed every event."""


class SamplingError(DataError):
    """Negative sampling request cannot be satisfied."""


class SplitError(DataError):
    """Too few users for the requested split."""


@dataclass(frozen=True)
class Event:
    user_id: str
    item_id: str
    timestamp: int
    interaction_type: str | None = None


@dataclass
class UserSequence:
    """One user's retained actions in chronological order."""

    user_index: int
    items: list[int]
    times: list[int]
    user_id: str | None = None

    def __post_init__(self):
        if len(self.items) != len(self.times):
            raise DataError("UserSequence: items and times lengths differ")
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise DataError("UserSequence: times must be non-decreasing")


@dataclass
class Vocabulary:
    """Bijection between retained item ids and indices 1..N; index 0 is padding."""

    items: list[str]
    item_to_index: dict[str, int] = field(default_factory=dict)
    item_frequency: np.ndarray | None = None

    def __post_init__(self):
        if not self.item_to_index:
            self.item_to_index = {item: i + 1 for i, item in enumerate(self.items)}
        if self.item_frequency is None:
            self.item_frequency = np.zeros(len(self.items) + 1)

    @property
    def n_items(self):
        return len(self.items)

    def index_of(self, item_id):
        return self.item_to_index[item_id]

    def item_of(self, index):
        return self.items[index - 1]

    def content_hash(self):
        digest = hashlib.sha256()
        for item in self.items:
            digest.update(item.encode("utf-8"))
            digest.update(b"\x00")
        return digest.hexdigest()


@dataclass
class WindowSample:
    """Fixed-length training instance: the last L actions before a target."""

    user_index: int
    position: int
    item_indices: list[int]
    intervals: list[float]
    pad_mask: list[bool]
    target_item: int
    prediction_time: int


@dataclass
class FilterConfig:
    min_item_actions: int = 1
    min_user_actions: int = 1
    max_user_actions: int = 10**9
    min_dwell_seconds: int = 0
    time_range: tuple[int, int] | None = None

    def __post_init__(self):
        if self.min_user_actions > self.max_user_actions:
            raise DataError("FilterConfig: min_user_actions > max_user_actions")


def ingest(path, max_malformed_fraction=0.10):
    """Parse a TSV event log into Events, skipping and counting malformed rows.

    Columns: user_id, item_id, timestamp, optional type. Lines starting with
    '#' are comments. Returns (events, malformed_count).
    """
    events = []
    malformed = 0
    total = 0
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                total += 1
                parts = line.split("\t")
                if len(parts) < 3:
                    malformed += 1
                    continue
                try:
                    ts = int(float(parts[2]))
                except ValueError:
                    malformed += 1
                    continue
                if ts < 0:
                    malformed += 1
                    continue
                itype = parts[3] if len(parts) > 3 and parts[3] else None
                events.append(Event(parts[0], parts[1], ts, itype))
    except OSError as e:
        raise DataError(f"cannot read event log {path}: {e}") from e
    if total and malformed / total > max_malformed_fraction:
        raise FormatError(
            f"{malformed}/{total} rows malformed in {path} "
            f"(limit {max_malformed_fraction:.0%})"
        )
    return events, malformed


def preprocess(events, cfg):
    """Filter events and assemble per-user chronological sequences.

    Order: time-range clip, short-dwell duplicate suppression, then item-count
    and user-count filters iterated to a fixpoint. Returns (sequences, vocab);
    vocab frequencies are left zero until a training split is chosen.
    """
    if not events:
        raise EmptyDatasetError("preprocess: no events")

    if cfg.time_range is not None:
        lo, hi = cfg.time_range
        events = [e for e in events if lo <= e.timestamp <= hi]

    by_user = {}
    for order, e in enumerate(events):
        by_user.setdefault(e.user_id, []).append((e.timestamp, order, e))
    for rows in by_user.values():
        rows.sort(key=lambda r: (r[0], r[1]))

    # Drop a repeat of the same item+type within min_dwell_seconds of the
    # previous occurrence kept for that user.
    if cfg.min_dwell_seconds > 0:
        for user, rows in by_user.items():
            kept = []
            last_seen = {}
            for ts, order, e in rows:
                key = (e.item_id, e.interaction_type)
                prev = last_seen.get(key)
                if prev is not None and ts - prev < cfg.min_dwell_seconds:
                    continue
                last_seen[key] = ts
                kept.append((ts, order, e))
            by_user[user] = kept

    # Iterate item- and user-count filters until nothing changes.
    while True:
        item_counts = {}
        for rows in by_user.values():
            for _, _, e in rows:
                item_counts[e.item_id] = item_counts.get(e.item_id, 0) + 1
        bad_items = {i for i, c in item_counts.items() if c < cfg.min_item_actions}
        changed = False
        if bad_items:
            for user, rows in by_user.items():
                kept = [r for r in rows if r[2].item_id not in bad_items]
                if len(kept) != len(rows):
                    by_user[user] = kept
                    changed = True
        bad_users = [
            u
            for u, rows in by_user.items()
            if not (cfg.min_user_actions <= len(rows) <= cfg.max_user_actions)
        ]
        if bad_users:
            for u in bad_users:
                del by_user[u]
            changed = True
        if not changed:
            break

    if not by_user:
        raise EmptyDatasetError("preprocess: all data filtered out")

    item_ids = sorted({e.item_id for rows in by_user.values() for _, _, e in rows})
    vocab = Vocabulary(items=item_ids)

    sequences = []
    for user_index, user in enumerate(sorted(by_user)):
        rows = by_user[user]
        sequences.append(
            UserSequence(
                user_index=user_index,
                items=[vocab.index_of(e.item_id) for _, _, e in rows],
                times=[ts for ts, _, _ in rows],
                user_id=user,
            )
        )
    return sequences, vocab


def split_by_user(sequences, ratios=(0.8, 0.1, 0.1), seed=0):
    """Disjoint train/valid/test partition of users, deterministic under seed."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios {ratios} do not sum to 1")
    if len(sequences) < 3:
        raise SplitError(f"need at least 3 users to split, got {len(sequences)}")
    order = np.random.default_rng(seed).permutation(len(sequences))
    n = len(sequences)
    n_train = int(round(ratios[0] * n))
    n_valid = int(round(ratios[1] * n))
    n_train = min(n_train, n)
    n_valid = min(n_valid, n - n_train)
    train = [sequences[i] for i in sorted(order[:n_train])]
    valid = [sequences[i] for i in sorted(order[n_train : n_train + n_valid])]
    test = [sequences[i] for i in sorted(order[n_train + n_valid :])]
    return train, valid, test


def count_train_frequencies(vocab, train_sequences):
    """Fill vocab.item_frequency from the training split only."""
    freq = np.zeros(vocab.n_items + 1)
    for seq in train_sequences:
        for item in seq.items:
            freq[item] += 1
    vocab.item_frequency = freq
    return vocab


def make_windows(seq, window, warm_start_min=5, time_unit="hours"):
    """One sample per position p >= warm_start_min over the user's sequence.

    History is the last min(window, p) actions, left-padded with index 0;
    intervals are (prediction_time - event_time) in the configured unit.
    """
    if window < 1:
        raise DataError(f"window must be >= 1, got {window}")
    unit = TIME_UNITS[time_unit]
    samples = []
    for p in range(warm_start_min, len(seq.items)):
        start = max(0, p - window)
        hist_items = seq.items[start:p]
        hist_times = seq.times[start:p]
        pad = window - len(hist_items)
        pred_time = seq.times[p]
        samples.append(
            WindowSample(
                user_index=seq.user_index,
                position=p,
                item_indices=[PAD_INDEX] * pad + hist_items,
                intervals=[0.0] * pad + [(pred_time - t) / unit for t in hist_times],
                pad_mask=[True] * pad + [False] * len(hist_items),
                target_item=seq.items[p],
                prediction_time=pred_time,
            )
        )
    return samples


def negative_seed(global_seed, user_index, position):
    """Stable per-sample seed so negative draws are order-independent."""
    return (global_seed * 1_000_003 + user_index * 10_007 + position) % (2**63)


def sample_negatives(vocab, target, n=100, seed=0):
    """Draw n distinct non-target items, proportional to training popularity."""
    n_items = vocab.n_items
    if n >= n_items:
        raise SamplingError(f"cannot draw {n} negatives from {n_items} items")
    weights = vocab.item_frequency.copy()
    weights[PAD_INDEX] = 0.0
    weights[target] = 0.0
    total = weights.sum()
    if total <= 0:
        raise SamplingError("no items with positive frequency to sample from")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(weights), size=n, replace=False, p=weights / total)
    return [int(c) for c in chosen]


def interval_stats(sequences, histogram_base=10.0):
    """Corpus summary plus a log-scale histogram of successive-event gaps.

    Returns (summary dict, histogram rows of (bucket_low, bucket_high, count)).
    Users with fewer than two events contribute no gaps.
    """
    if not sequences:
        raise DataError("interval_stats: no sequences")
    per_user = np.array([len(s.items) for s in sequences], dtype=float)
    item_counts = {}
    gaps = []
    t_min, t_max = math.inf, -math.inf
    for seq in sequences:
        for item in seq.items:
            item_counts[item] = item_counts.get(item, 0) + 1
        for a, b in zip(seq.times, seq.times[1:]):
            gaps.append(b - a)
        if seq.times:
            t_min = min(t_min, seq.times[0])
            t_max = max(t_max, seq.times[-1])
    per_item = np.array(list(item_counts.values()), dtype=float)

    summary = {
        "users": len(sequences),
        "items": len(item_counts),
        "actions": int(per_user.sum()),
        "actions_per_user_mean": float(per_user.mean()),
        "actions_per_user_std": float(per_user.std()),
        "actions_per_item_mean": float(per_item.mean()),
        "actions_per_item_std": float(per_item.std()),
        "time_span_seconds": int(t_max - t_min) if gaps or len(sequences) else 0,
        "gap_count": len(gaps),
    }

    rows = []
    if gaps:
        gaps = np.asarray(gaps, dtype=float)
        zero = int((gaps <= 0).sum())
        if zero:
            rows.append((0.0, 1.0, zero))
        positive = gaps[gaps > 0]
        if positive.size:
            top = int(math.floor(math.log(positive.max(), histogram_base)))
            for k in range(0, top + 1):
                lo = histogram_base**k
                hi = histogram_base ** (k + 1)
                count = int(((positive >= lo) & (positive < hi)).sum())
                if count:
                    rows.append((lo, hi, count))
    return summary, rows
