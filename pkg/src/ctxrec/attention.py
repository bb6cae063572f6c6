"""Content-importance stage: stacked self-attention blocks plus a bi-linear
read-out against the most recent item, producing a probability vector over
window positions."""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "AttentionConfig",
    "ConfigError",
    "init_attention_params",
    "encode",
    "alpha_scores",
    "flat_alpha",
]


class ConfigError(ValueError):
    pass


@dataclass
class AttentionConfig:
    d_in: int
    d_a: int
    heads: int
    blocks: int

    def __post_init__(self):
        if self.d_a % self.heads != 0:
            raise ConfigError(f"d_a={self.d_a} not divisible by heads={self.heads}")

    @property
    def d_head(self):
        return self.d_a // self.heads


def _kaiming(rng, fan_in, shape):
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


def init_attention_params(cfg, rng):
    """Parameters for all encoder blocks plus the final bi-linear read-out.

    Head projections take d_in-dimensional input: each block's feed-forward
    maps back to d_in, so the hidden state stays L x d_in throughout.
    """
    params = {}
    for j in range(cfg.blocks):
        for i in range(cfg.heads):
            for tag in ("wq", "wk", "wv"):
                params[f"alpha.block{j}.head{i}.{tag}"] = Tensor(
                    _kaiming(rng, cfg.d_in, (cfg.d_in, cfg.d_head))
                )
        params[f"alpha.block{j}.wo"] = Tensor(_kaiming(rng, cfg.d_a, (cfg.d_a, cfg.d_a)))
        params[f"alpha.block{j}.ff.w"] = Tensor(_kaiming(rng, cfg.d_a, (cfg.d_a, cfg.d_in)))
        params[f"alpha.block{j}.ff.b"] = Tensor(np.zeros(cfg.d_in))
        params[f"alpha.block{j}.ln.gain"] = Tensor(np.ones(cfg.d_in))
        params[f"alpha.block{j}.ln.bias"] = Tensor(np.zeros(cfg.d_in))
    params["alpha.w0q"] = Tensor(_kaiming(rng, cfg.d_in, (cfg.d_in, cfg.d_in)))
    params["alpha.w0k"] = Tensor(_kaiming(rng, cfg.d_in, (cfg.d_in, cfg.d_in)))
    for name, p in params.items():
        p.name = name
    return params


def encode(params, cfg, x, real_mask, *, dropout_rate=0.0, rng=None, training=False):
    """Run the encoder blocks: x is (B, L, d_in), real_mask (B, L) bool.

    Pad key positions get zero attention weight; each block applies per-head
    scaled dot-product attention, head concat + output projection, then a
    residual feed-forward with layer normalization.
    """
    mask = np.asarray(real_mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("encode: every sample needs at least one real position")
    scale = 1.0 / math.sqrt(cfg.d_head)
    key_mask = mask[:, None, :]  # broadcast over query positions
    h = x
    for j in range(cfg.blocks):
        head_outputs = []
        for i in range(cfg.heads):
            q = T.matmul(h, params[f"alpha.block{j}.head{i}.wq"])
            k = T.matmul(h, params[f"alpha.block{j}.head{i}.wk"])
            v = T.matmul(h, params[f"alpha.block{j}.head{i}.wv"])
            logits = T.scale(T.matmul(q, T.swap_last_axes(k)), scale)
            attn = T.masked_softmax(logits, key_mask, axis=-1)
            head_outputs.append(T.matmul(attn, v))
        z = T.matmul(T.concat(head_outputs, axis=-1), params[f"alpha.block{j}.wo"])
        ff = T.relu(
            T.add_bias(
                T.matmul(z, params[f"alpha.block{j}.ff.w"]),
                params[f"alpha.block{j}.ff.b"],
            )
        )
        ff = T.dropout(ff, dropout_rate, rng, training)
        h = T.layer_norm(
            T.add(h, ff),
            params[f"alpha.block{j}.ln.gain"],
            params[f"alpha.block{j}.ln.bias"],
        )
    return h


def alpha_scores(params, cfg, h, x_last, real_mask):
    """Bi-linear attention of the encoded window against the last item.

    h is (B, L, d_in), x_last (B, d_in). Returns (B, L, 1) probabilities that
    sum to 1 over real positions, exactly 0 at pads.
    """
    mask = np.asarray(real_mask, dtype=bool)
    q = T.matmul(h, params["alpha.w0q"])
    k = T.matmul(x_last, params["alpha.w0k"])
    b, d = k.values.shape
    logits = T.scale(T.matmul(q, T.reshape(k, (b, d, 1))), 1.0 / math.sqrt(cfg.d_in))
    return T.masked_softmax(logits, mask[:, :, None], axis=-2)


def flat_alpha(real_mask):
    """Ablation switch: uniform scores over real positions (no content signal)."""
    mask = np.asarray(real_mask, dtype=float)
    counts = mask.sum(axis=-1, keepdims=True)
    if (counts == 0).any():
        raise ValueError("flat_alpha: every sample needs at least one real position")
    return Tensor((mask / counts)[:, :, None])
