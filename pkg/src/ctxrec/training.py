"""Optimizer, epoch loop with warmup and early stopping, and checkpoints."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Vocabulary, negative_seed, sample_negatives
from .losses import LOSSES
from .model import Batch, Model, ModelConfig, build_batch

__all__ = [
    "TrainConfig",
    "TrainingDivergedError",
    "AdamOptimizer",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_FORMAT_VERSION",
]

CHECKPOINT_FORMAT_VERSION = 1


class TrainingDivergedError(ArithmeticError):
    def __init__(self, epoch, batch_index, loss):
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch_index}"
        )
        self.epoch = epoch
        self.batch_index = batch_index
        self.loss = loss


@dataclass
class TrainConfig:
    loss: str = "top1"
    learning_rate: float = 1e-3
    batch_size: int = 100
    negatives: int = 100
    warmup_epochs: int = 3
    patience: int = 3
    max_epochs: int = 50
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {sorted(LOSSES)}")


class AdamOptimizer:
    """Adaptive-moment optimizer over the model's named parameters."""

    def __init__(self, named_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.named_params = list(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.values) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.values) for name, p in self.named_params}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.named_params:
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1**self.t)
            v_hat = self.v[name] / (1 - b2**self.t)
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def warmup_lr(base_lr, epoch, warmup_epochs):
    """Linear ramp from base_lr/10 to base_lr over warmup_epochs, then constant."""
    if warmup_epochs <= 0 or epoch >= warmup_epochs:
        return base_lr
    lo = base_lr / 10.0
    return lo + (base_lr - lo) * (epoch / warmup_epochs)


def _epoch_negatives(windows, vocab, cfg):
    """Per-sample negative draws, seeded from (global seed, user, position)."""
    return np.array(
        [
            sample_negatives(
                vocab,
                w.target_item,
                n=cfg.negatives,
                seed=negative_seed(cfg.seed, w.user_index, w.position),
            )
            for w in windows
        ],
        dtype=np.int64,
    )


def train(model: Model, train_windows, valid_windows, vocab: Vocabulary, cfg: TrainConfig):
    """Train with early stopping on validation Recall@5.

    Returns (history, best_epoch); the model is left holding the
    best-validation parameter values. History rows carry epoch, learning
    rate, mean train loss, and validation recall.
    """
    from .metrics import model_ranks, recall_at_k  # local import to avoid a cycle

    if not train_windows:
        raise ValueError("train: empty training split")
    loss_fn = LOSSES[cfg.loss]
    optimizer = AdamOptimizer(
        model.trainable(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    )
    shuffle_rng = np.random.default_rng(cfg.seed)
    dropout_rng = np.random.default_rng(cfg.seed + 1)

    history = []
    best_recall = -1.0
    best_epoch = -1
    best_values = None
    stale = 0

    for epoch in range(cfg.max_epochs):
        optimizer.lr = warmup_lr(cfg.learning_rate, epoch, cfg.warmup_epochs)
        order = shuffle_rng.permutation(len(train_windows))
        losses = []
        for bi in range(0, len(order), cfg.batch_size):
            chunk = [train_windows[i] for i in order[bi : bi + cfg.batch_size]]
            negs = _epoch_negatives(chunk, vocab, cfg)
            batch = build_batch(chunk, model.config, negatives=negs)
            loss = train_step(model, batch, loss_fn, optimizer, dropout_rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, bi // cfg.batch_size, loss)
            losses.append(loss)

        if valid_windows:
            ranks = model_ranks(model, valid_windows)
            recall = recall_at_k(ranks, 5)
        else:
            recall = float("nan")
        history.append(
            {
                "epoch": epoch,
                "lr": optimizer.lr,
                "train_loss": float(np.mean(losses)),
                "valid_recall_at_5": recall,
            }
        )

        if not valid_windows:
            continue
        if recall > best_recall:
            best_recall = recall
            best_epoch = epoch
            best_values = {name: p.values.copy() for name, p in model.trainable()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if best_values is not None:
        for name, p in model.trainable():
            p.values[...] = best_values[name]
    return history, best_epoch


def train_step(model, batch: Batch, loss_fn, optimizer, dropout_rng):
    """One forward/backward/update over a batch; returns the scalar loss."""
    model.zero_grad()
    result = model.forward(batch, training=True, rng=dropout_rng)
    cand = np.concatenate([batch.targets[:, None], batch.negatives], axis=1)
    scores = model.score_candidates(result.x_hat, cand)
    from . import tensor as T

    r_target = T.narrow(scores, 1, 0, 1)
    r_neg = T.narrow(scores, 1, 1, scores.values.shape[1] - 1)
    loss = loss_fn(r_target, r_neg)
    loss.backward()
    optimizer.step()
    return float(loss.values)


# ---------------------------------------------------------------------------
# Checkpoints: one .npz holding named tensors plus a JSON metadata document.


def save_checkpoint(path, model: Model, vocab: Vocabulary, extra_config=None):
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": asdict(model.config),
        "vocab_items": vocab.items,
        "vocab_hash": vocab.content_hash(),
        "run_config": extra_config or {},
    }
    arrays = {f"param/{name}": p.values for name, p in model.trainable()}
    arrays["vocab_frequency"] = vocab.item_frequency
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_checkpoint(path):
    """Rebuild (model, vocab, meta) from a checkpoint file."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint format version {meta.get('format_version')!r}"
            )
        model = Model(ModelConfig(**meta["model_config"]))
        for name, p in model.trainable():
            p.values[...] = data[f"param/{name}"]
        vocab = Vocabulary(items=list(meta["vocab_items"]))
        vocab.item_frequency = data["vocab_frequency"].copy()
    return model, vocab, meta
