"""Ranking losses over a target score and its sampled negatives."""

from . import tensor as T

__all__ = ["loss_nll", "loss_bpr", "loss_top1", "LOSSES"]


def _check(r_target, r_negatives):
    bt, one = r_target.values.shape
    bn, n = r_negatives.values.shape
    if one != 1 or bt != bn or n < 1:
        raise T.ShapeError(
            f"loss: expected (B,1) target and (B,n) negatives, got "
            f"{r_target.values.shape} and {r_negatives.values.shape}"
        )


def loss_nll(r_target, r_negatives):
    """Sampled softmax negative log-likelihood; the denominator includes the
    target, computed via log-sum-exp."""
    _check(r_target, r_negatives)
    scores = T.concat([r_target, r_negatives], axis=1)
    lse = T.logsumexp(scores, axis=-1, keepdims=True)
    return T.mean_all(T.sub(lse, r_target))


def loss_bpr(r_target, r_negatives):
    """Pairwise loss: mean over negatives of -log sigmoid(r_target - r_neg)."""
    _check(r_target, r_negatives)
    n = r_negatives.values.shape[1]
    rep = T.broadcast_to(r_target, (r_target.values.shape[0], n))
    return T.mean_all(T.softplus(T.sub(r_negatives, rep)))


def loss_top1(r_target, r_negatives):
    """Pairwise rank push plus a score regularizer on the negatives:
    mean of sigmoid(r_neg - r_target) + sigmoid(r_neg^2)."""
    _check(r_target, r_negatives)
    n = r_negatives.values.shape[1]
    rep = T.broadcast_to(r_target, (r_target.values.shape[0], n))
    rank_part = T.sigmoid(T.sub(r_negatives, rep))
    reg_part = T.sigmoid(T.mul(r_negatives, r_negatives))
    return T.mean_all(T.add(rank_part, reg_part))


LOSSES = {"nll": loss_nll, "bpr": loss_bpr, "top1": loss_top1}
