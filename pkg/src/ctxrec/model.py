"""Full model: embeddings, the three weighing stages, and item scoring."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import attention, context, kernels
from . import tensor as T
from .data import PAD_INDEX, WindowSample
from .tensor import Tensor

__all__ = ["ModelConfig", "Batch", "ForwardResult", "Model", "build_batch"]

NEG_INF = -1e30


@dataclass
class ModelConfig:
    n_items: int
    window: int = 8
    d_in: int = 32
    d_a: int = 32
    heads: int = 2
    blocks: int = 2
    d_r: int = 8
    kernel_spec: str = "exp5"
    dropout: float = 0.2
    share_embeddings: bool = True
    flat_alpha: bool = False
    context_mode: str = "bidirectional"
    time_unit: str = "hours"
    interval_log1p: bool = False

    def __post_init__(self):
        if self.context_mode not in ("bidirectional", "global", "local"):
            raise ValueError(f"unknown context_mode {self.context_mode!r}")
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")

    @property
    def d_out(self):
        return self.d_in


@dataclass
class Batch:
    items: np.ndarray  # (B, L) int
    intervals: np.ndarray  # (B, L) float, configured unit
    real_mask: np.ndarray  # (B, L) bool, True = real position
    targets: np.ndarray  # (B,) int
    negatives: np.ndarray | None = None  # (B, n) int


@dataclass
class ForwardResult:
    alpha: Tensor  # (B, L, 1)
    beta: Tensor  # (B, L, K)
    beta_c: Tensor  # (B, L, 1)
    gamma: Tensor  # (B, L, 1)
    x_hat: Tensor  # (B, d_out)


def build_batch(samples: list[WindowSample], cfg: ModelConfig, negatives=None):
    items = np.array([s.item_indices for s in samples], dtype=np.int64)
    intervals = np.array([s.intervals for s in samples], dtype=np.float64)
    if cfg.interval_log1p:
        intervals = np.log1p(intervals)
    real = ~np.array([s.pad_mask for s in samples], dtype=bool)
    targets = np.array([s.target_item for s in samples], dtype=np.int64)
    negs = None if negatives is None else np.asarray(negatives, dtype=np.int64)
    return Batch(items, intervals, real, targets, negs)


class Model:
    """The sequential recommender with its parameter registry.

    All learnable tensors live in ``self.params`` under stable names used
    for checkpointing; the kernel bank's parameters are included.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.attn_cfg = attention.AttentionConfig(c.d_in, c.d_a, c.heads, c.blocks)
        params = {}
        # Embeddings: row 0 is the padding item.
        e_in = Tensor(
            rng.normal(0.0, 1.0 / math.sqrt(c.d_in), size=(c.n_items + 1, c.d_in)),
            name="embed.input",
        )
        params["embed.input"] = e_in
        if c.share_embeddings:
            params["embed.output"] = e_in
        else:
            params["embed.output"] = Tensor(
                rng.normal(0.0, 1.0 / math.sqrt(c.d_out), size=(c.n_items + 1, c.d_out)),
                name="embed.output",
            )
        params.update(attention.init_attention_params(self.attn_cfg, rng))
        self.bank = kernels.default_bank(c.kernel_spec, rng)
        for p in self.bank.params():
            params[p.name] = p
        params.update(context.init_context_params(c.d_in, c.d_r, len(self.bank), rng))
        params["out.w"] = Tensor(
            rng.normal(0.0, math.sqrt(2.0 / c.d_in), size=(c.d_in, c.d_out)), name="out.w"
        )
        params["out.b"] = Tensor(np.zeros(c.d_out), name="out.b")
        self.params = params

    def trainable(self):
        """Unique learnable tensors in stable order (shared embedding once)."""
        seen = set()
        out = []
        for name, p in self.params.items():
            if id(p) in seen:
                continue
            seen.add(id(p))
            out.append((name, p))
        return out

    def zero_grad(self):
        for _, p in self.trainable():
            p.zero_grad()

    def forward(self, batch: Batch, *, training=False, rng=None) -> ForwardResult:
        c = self.config
        p = self.params
        mask = batch.real_mask
        x = T.embedding(p["embed.input"], batch.items)  # (B, L, d_in)
        b, length, _ = x.values.shape

        if c.flat_alpha:
            alpha = attention.flat_alpha(mask)
        else:
            h = attention.encode(
                p, self.attn_cfg, x, mask,
                dropout_rate=c.dropout, rng=rng, training=training,
            )
            x_last = T.select(x, 1, length - 1)
            alpha = attention.alpha_scores(p, self.attn_cfg, h, x_last, mask)

        intervals = Tensor(batch.intervals[:, :, None])
        beta = kernels.evaluate(self.bank, intervals)  # (B, L, K)

        if c.context_mode == "global":
            mix = context.global_mixture(p, b, length)
        elif c.context_mode == "local":
            mix = context.local_mixture(
                p, x, dropout_rate=c.dropout, rng=rng, training=training
            )
        else:
            feats = context.context_features(p, x, mask)
            feats = T.dropout(feats, c.dropout, rng, training)
            mix = context.mixture(
                p, feats, dropout_rate=c.dropout, rng=rng, training=training
            )

        beta_c, gamma = context.fuse(alpha, beta, mix, mask)
        x_hat = context.predict_representation(
            p, gamma, x, dropout_rate=c.dropout, rng=rng, training=training
        )
        return ForwardResult(alpha, beta, beta_c, gamma, x_hat)

    def score_candidates(self, x_hat, candidate_ids):
        """Inner-product scores for per-sample candidate lists: (B, M)."""
        cand = np.asarray(candidate_ids, dtype=np.int64)
        rows = T.embedding(self.params["embed.output"], cand)  # (B, M, d_out)
        b, d = x_hat.values.shape
        scores = T.matmul(rows, T.reshape(x_hat, (b, d, 1)))
        return T.reshape(scores, cand.shape)

    def score_all_items(self, x_hat_values):
        """Full-corpus scores outside the graph; padding row forced to -inf."""
        scores = np.asarray(x_hat_values) @ self.params["embed.output"].values.T
        scores[..., PAD_INDEX] = NEG_INF
        return scores
