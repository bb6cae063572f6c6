"""Context stage: bidirectional gated-recurrent features per event, a mixture
distribution over the temporal kernels, product fusion with the content
scores, and the final prediction head."""

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "init_context_params",
    "context_features",
    "mixture",
    "global_mixture",
    "local_mixture",
    "fuse",
    "predict_representation",
]


def _kaiming(rng, fan_in, shape):
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


def init_context_params(d_in, d_r, n_kernels, rng, attr_dim=0):
    """Gated-recurrent cells (d_r/2 per direction), mixture head, and the
    parameters for the global/local ablation variants."""
    if d_r % 2 != 0:
        raise ValueError(f"d_r={d_r} must be even (split across directions)")
    h = d_r // 2
    params = {}
    for direction in ("fwd", "bwd"):
        for gate in ("z", "r", "h"):
            params[f"ctx.{direction}.w{gate}"] = Tensor(_kaiming(rng, d_in, (d_in, h)))
            params[f"ctx.{direction}.u{gate}"] = Tensor(_kaiming(rng, h, (h, h)))
            params[f"ctx.{direction}.b{gate}"] = Tensor(np.zeros(h))
    params["ctx.mix.w"] = Tensor(_kaiming(rng, d_r + attr_dim, (d_r + attr_dim, n_kernels)))
    params["ctx.mix.b"] = Tensor(np.zeros(n_kernels))
    params["ctx.global.logits"] = Tensor(np.zeros(n_kernels))
    params["ctx.local.w"] = Tensor(_kaiming(rng, d_in, (d_in, n_kernels)))
    params["ctx.local.b"] = Tensor(np.zeros(n_kernels))
    for name, p in params.items():
        p.name = name
    return params


def _gru_cell(params, prefix, x_t, h_prev):
    z = T.sigmoid(
        T.add_bias(
            T.add(T.matmul(x_t, params[f"{prefix}.wz"]), T.matmul(h_prev, params[f"{prefix}.uz"])),
            params[f"{prefix}.bz"],
        )
    )
    r = T.sigmoid(
        T.add_bias(
            T.add(T.matmul(x_t, params[f"{prefix}.wr"]), T.matmul(h_prev, params[f"{prefix}.ur"])),
            params[f"{prefix}.br"],
        )
    )
    cand = T.tanh(
        T.add_bias(
            T.add(
                T.matmul(x_t, params[f"{prefix}.wh"]),
                T.matmul(T.mul(r, h_prev), params[f"{prefix}.uh"]),
            ),
            params[f"{prefix}.bh"],
        )
    )
    one_minus_z = T.add_const(T.neg(z), 1.0)
    return T.add(T.mul(one_minus_z, h_prev), T.mul(z, cand))


def _run_direction(params, prefix, x, mask, steps):
    b, _, _ = x.values.shape
    h_dim = params[f"{prefix}.uz"].values.shape[0]
    h = Tensor(np.zeros((b, h_dim)))
    outputs = {}
    for t in steps:
        x_t = T.select(x, 1, t)
        h_new = _gru_cell(params, prefix, x_t, h)
        m = mask[:, t : t + 1].astype(float)
        # Pad steps pass the state through unchanged.
        h = T.add(T.mul_const(h_new, m), T.mul_const(h, 1.0 - m))
        outputs[t] = h
    return [outputs[t] for t in sorted(outputs)]


def context_features(params, x, real_mask, attr=None):
    """Per-position context vectors from both directions: (B, L, d_r).

    Pad positions emit zero rows. ``attr`` is an optional constant
    (B, L, a) feature array concatenated after the recurrent features.
    """
    mask = np.asarray(real_mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("context_features: every sample needs at least one real position")
    length = x.values.shape[1]
    fwd = _run_direction(params, "ctx.fwd", x, mask, range(length))
    bwd = _run_direction(params, "ctx.bwd", x, mask, range(length - 1, -1, -1))
    c = T.concat([T.stack(fwd, axis=1), T.stack(bwd, axis=1)], axis=-1)
    c = T.mul_const(c, mask[:, :, None].astype(float))
    if attr is not None:
        attr = np.asarray(attr, dtype=float)
        if attr.shape[:2] != c.values.shape[:2]:
            raise T.ShapeError(
                f"context_features: attr shape {attr.shape} does not cover {c.values.shape[:2]}"
            )
        c = T.concat([c, Tensor(attr)], axis=-1)
    return c


def mixture(params, c, *, dropout_rate=0.0, rng=None, training=False):
    """Rowwise distribution over kernels from the context features."""
    logits = T.add_bias(T.matmul(c, params["ctx.mix.w"]), params["ctx.mix.b"])
    logits = T.dropout(logits, dropout_rate, rng, training)
    return T.softmax(logits, axis=-1)


def global_mixture(params, batch_size, length):
    """Ablation: one learned kernel distribution shared by every position."""
    logits = params["ctx.global.logits"]
    k = logits.values.shape[0]
    tiled = T.broadcast_to(T.reshape(logits, (1, 1, k)), (batch_size, length, k))
    return T.softmax(tiled, axis=-1)


def local_mixture(params, x, *, dropout_rate=0.0, rng=None, training=False):
    """Ablation: kernel distribution from each item embedding alone."""
    logits = T.add_bias(T.matmul(x, params["ctx.local.w"]), params["ctx.local.b"])
    logits = T.dropout(logits, dropout_rate, rng, training)
    return T.softmax(logits, axis=-1)


def fuse(alpha, beta, p, real_mask):
    """Final attention: softmax over real positions of alpha * (beta . P).

    Returns (beta_c, gamma), both (B, L, 1); gamma is exactly 0 at pads.
    """
    mask = np.asarray(real_mask, dtype=bool)
    beta_c = T.tensor_sum(T.mul(beta, p), axis=-1, keepdims=True)
    fused = T.mul(alpha, beta_c)
    gamma = T.masked_softmax(fused, mask[:, :, None], axis=-2)
    return beta_c, gamma


def predict_representation(params_out, gamma, x, *, dropout_rate=0.0, rng=None, training=False):
    """Weighted-sum user representation projected to the output space."""
    pooled = T.weighted_sum(gamma, x)
    x_hat = T.add_bias(T.matmul(pooled, params_out["out.w"]), params_out["out.b"])
    return T.dropout(x_hat, dropout_rate, rng, training)
