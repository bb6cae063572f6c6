"""Dense float64 tensors with reverse-mode automatic differentiation.

Only the operations the model actually needs are provided. Shapes are
checked explicitly and never broadcast silently; the few ops that do
broadcast (``broadcast_to``, ``mul_const``) say so in their name.
"""

import itertools

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "add",
    "add_bias",
    "sub",
    "mul",
    "neg",
    "scale",
    "mul_scalar_t",
    "add_scalar_t",
    "exp",
    "log",
    "log1p",
    "relu",
    "sigmoid",
    "tanh",
    "softplus",
    "matmul",
    "transpose",
    "swap_last_axes",
    "reshape",
    "broadcast_to",
    "mul_const",
    "add_const",
    "concat",
    "stack",
    "select",
    "narrow",
    "embedding",
    "tensor_sum",
    "mean_all",
    "softmax",
    "masked_softmax",
    "logsumexp",
    "layer_norm",
    "weighted_sum",
    "dropout",
    "grad_check",
    "grad_check_report",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value where one is required."""


_ids = itertools.count()


class Tensor:
    """A dense float64 array recorded in a gradient graph.

    Leaf tensors (parameters, inputs) have no parents. Every op creates a
    new tensor holding closures over its parents; ``backward`` replays the
    recorded graph in reverse insertion order, which is a valid reverse
    topological order because parents are always created before children.
    """

    __slots__ = ("values", "grad", "name", "_parents", "_backward_fn", "_idx")

    def __init__(self, values, parents=(), backward_fn=None, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.name = name
        self._parents = tuple(parents)
        self._backward_fn = backward_fn
        self._idx = next(_ids)

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.values.shape}{label})"

    def item(self):
        return float(self.values)

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        """Accumulate gradients of this tensor into every reachable leaf.

        Each node is visited exactly once, in reverse insertion order, so
        repeated runs over identically built graphs are bit-identical.
        """
        if seed is None:
            if self.values.size != 1:
                raise ShapeError(
                    f"backward() without a seed requires a scalar, got shape {self.shape}"
                )
            seed = np.ones_like(self.values)
        nodes = _reachable(self)
        self.grad = np.asarray(seed, dtype=np.float64)
        for node in sorted(nodes, key=lambda t: t._idx, reverse=True):
            if node._backward_fn is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward_fn(node.grad)):
                if g is None:
                    continue
                if parent.grad is None:
                    parent.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
                else:
                    parent.grad = parent.grad + g

    # Convenience operators used pervasively by the model code.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _reachable(root):
    seen = {id(root): root}
    stack = [root]
    while stack:
        node = stack.pop()
        for parent in node._parents:
            if id(parent) not in seen:
                seen[id(parent)] = parent
                stack.append(parent)
    return list(seen.values())


def _require_same_shape(a, b, op):
    if a.values.shape != b.values.shape:
        raise ShapeError(f"{op}: shapes {a.values.shape} and {b.values.shape} differ")


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Elementwise arithmetic


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape(a, b, "add")
    return Tensor(a.values + b.values, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape(a, b, "sub")
    return Tensor(a.values - b.values, (a, b), lambda g: (g, -g))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape(a, b, "mul")
    return Tensor(a.values * b.values, (a, b), lambda g: (g * b.values, g * a.values))


def neg(a):
    return Tensor(-a.values, (a,), lambda g: (-g,))


def scale(a, c):
    """Multiply by a python scalar constant (no gradient to the constant)."""
    c = float(c)
    return Tensor(a.values * c, (a,), lambda g: (g * c,))


def mul_scalar_t(x, s):
    """x * s where s is a learnable 0-d tensor."""
    if s.values.ndim != 0:
        raise ShapeError(f"mul_scalar_t: scalar operand has shape {s.shape}")
    return Tensor(
        x.values * s.values,
        (x, s),
        lambda g: (g * s.values, np.sum(g * x.values)),
    )


def add_scalar_t(x, s):
    """x + s where s is a learnable 0-d tensor."""
    if s.values.ndim != 0:
        raise ShapeError(f"add_scalar_t: scalar operand has shape {s.shape}")
    return Tensor(x.values + s.values, (x, s), lambda g: (g, np.sum(g)))


def add_bias(x, b):
    """x + b where b is a (d,) vector added along the last axis."""
    d = x.values.shape[-1]
    if b.values.shape != (d,):
        raise ShapeError(f"add_bias: bias shape {b.values.shape} != ({d},)")
    axes = tuple(range(x.values.ndim - 1))
    return Tensor(x.values + b.values, (x, b), lambda g: (g, g.sum(axis=axes)))


def exp(a):
    out_vals = np.exp(a.values)
    return Tensor(out_vals, (a,), lambda g: (g * out_vals,))


def log(a):
    return Tensor(np.log(a.values), (a,), lambda g: (g / a.values,))


def log1p(a):
    return Tensor(np.log1p(a.values), (a,), lambda g: (g / (1.0 + a.values),))


def relu(a):
    mask = a.values > 0
    return Tensor(a.values * mask, (a,), lambda g: (g * mask,))


def sigmoid(a):
    out_vals = _sigmoid_vals(a.values)
    return Tensor(out_vals, (a,), lambda g: (g * out_vals * (1.0 - out_vals),))


def _sigmoid_vals(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def tanh(a):
    out_vals = np.tanh(a.values)
    return Tensor(out_vals, (a,), lambda g: (g * (1.0 - out_vals**2),))


def softplus(a):
    # log(1 + e^x), computed without overflow for large |x|.
    out_vals = np.maximum(a.values, 0.0) + np.log1p(np.exp(-np.abs(a.values)))
    sig = _sigmoid_vals(a.values)
    return Tensor(out_vals, (a,), lambda g: (g * sig,))


# ---------------------------------------------------------------------------
# Linear algebra and shape manipulation


def matmul(a, b):
    """Matrix product: 2D@2D, 3D@2D (shared right operand), or 3D@3D batched."""
    av, bv = a.values, b.values
    if av.ndim == 2 and bv.ndim == 2:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: inner dims of {av.shape} and {bv.shape} differ")
        return Tensor(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))
    if av.ndim == 3 and bv.ndim == 2:
        if av.shape[2] != bv.shape[0]:
            raise ShapeError(f"matmul: inner dims of {av.shape} and {bv.shape} differ")
        return Tensor(
            av @ bv,
            (a, b),
            lambda g: (g @ bv.T, np.einsum("bmk,bmn->kn", av, g)),
        )
    if av.ndim == 3 and bv.ndim == 3:
        if av.shape[0] != bv.shape[0] or av.shape[2] != bv.shape[1]:
            raise ShapeError(f"matmul: batched shapes {av.shape} and {bv.shape} differ")
        return Tensor(
            av @ bv,
            (a, b),
            lambda g: (g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g),
        )
    raise ShapeError(f"matmul: unsupported ranks {av.ndim} and {bv.ndim}")


def transpose(a):
    if a.values.ndim != 2:
        raise ShapeError(f"transpose: expected a 2-d tensor, got shape {a.shape}")
    return Tensor(a.values.T, (a,), lambda g: (g.T,))


def swap_last_axes(a):
    if a.values.ndim < 2:
        raise ShapeError(f"swap_last_axes: rank {a.values.ndim} < 2")
    return Tensor(
        np.swapaxes(a.values, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),)
    )


def reshape(a, shape):
    orig = a.values.shape
    return Tensor(a.values.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def broadcast_to(a, shape):
    """Explicit broadcast; the gradient sums over the expanded axes."""
    orig = a.values.shape
    out_vals = np.broadcast_to(a.values, shape)

    def backward(g):
        extra = g.ndim - len(orig)
        g = g.sum(axis=tuple(range(extra)))
        keep = tuple(i for i, n in enumerate(orig) if n == 1 and g.shape[i] != 1)
        if keep:
            g = g.sum(axis=keep, keepdims=True)
        return (g.reshape(orig),)

    return Tensor(out_vals.copy(), (a,), backward)


def mul_const(a, c):
    """Multiply by a constant array (broadcast against a's shape, no gradient to c)."""
    c = np.broadcast_to(np.asarray(c, dtype=np.float64), a.values.shape)
    return Tensor(a.values * c, (a,), lambda g: (g * c,))


def add_const(a, c):
    c = np.broadcast_to(np.asarray(c, dtype=np.float64), a.values.shape)
    return Tensor(a.values + c, (a,), lambda g: (g,))


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.values.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out_vals = np.concatenate([t.values for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out_vals, tuple(tensors), backward)


def stack(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    out_vals = np.stack([t.values for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor(out_vals, tuple(tensors), backward)


def select(a, axis, index):
    """Take one slice along axis, dropping that axis."""
    out_vals = np.take(a.values, index, axis=axis)
    shape = a.values.shape

    def backward(g):
        ga = np.zeros(shape)
        sl = [slice(None)] * len(shape)
        sl[axis] = index
        ga[tuple(sl)] = g
        return (ga,)

    return Tensor(out_vals.copy(), (a,), backward)


def narrow(a, axis, start, length):
    """Slice [start, start+length) along axis, keeping the axis."""
    shape = a.values.shape
    sl = [slice(None)] * len(shape)
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def backward(g):
        ga = np.zeros(shape)
        ga[sl] = g
        return (ga,)

    return Tensor(a.values[sl].copy(), (a,), backward)


def embedding(table, indices):
    """Row lookup into a (N, d) table; gradient scatter-adds into the table."""
    if table.values.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-d, got shape {table.shape}")
    idx = np.asarray(indices)
    out_vals = table.values[idx]
    n_rows = table.values.shape[0]
    dim = table.values.shape[1]

    def backward(g):
        gt = np.zeros((n_rows, dim))
        np.add.at(gt, idx, g)
        return (gt,)

    return Tensor(out_vals, (table,), backward)


def tensor_sum(a, axis=None, keepdims=False):
    out_vals = a.values.sum(axis=axis, keepdims=keepdims)
    shape = a.values.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor(out_vals, (a,), backward)


def mean_all(a):
    n = a.values.size
    return Tensor(a.values.mean(), (a,), lambda g: (np.broadcast_to(g / n, a.values.shape).copy(),))


# ---------------------------------------------------------------------------
# Normalization and reductions with structure


def softmax(a, axis=-1):
    return masked_softmax(a, None, axis=axis)


def masked_softmax(a, mask, axis=-1):
    """Softmax with max-subtraction; masked entries are exactly zero.

    ``mask`` is a constant boolean array (broadcastable to a's shape) with
    at least one True entry per slice along ``axis``.
    """
    x = a.values
    if mask is None:
        m = None
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not m.any(axis=axis).all():
            raise ShapeError("masked_softmax: a slice has no unmasked entries")
        shifted = x - np.where(m, x, -np.inf).max(axis=axis, keepdims=True)
        e = np.exp(shifted) * m
    out_vals = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_vals).sum(axis=axis, keepdims=True)
        return (out_vals * (g - dot),)

    return Tensor(out_vals, (a,), backward)


def logsumexp(a, axis=-1, keepdims=True):
    x = a.values
    mx = x.max(axis=axis, keepdims=True)
    out_vals = np.log(np.exp(x - mx).sum(axis=axis, keepdims=True)) + mx
    if not keepdims:
        out_vals = np.squeeze(out_vals, axis=axis)
    soft = np.exp(x - mx)
    soft = soft / soft.sum(axis=axis, keepdims=True)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return Tensor(out_vals, (a,), backward)


_LN_EPS = 1e-5


def layer_norm(x, gain, bias):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.values.shape[-1]
    if d < 2:
        raise ShapeError("layer_norm: last dimension must be >= 2")
    if gain.values.shape != (d,) or bias.values.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias must have shape ({d},), got "
            f"{gain.values.shape} and {bias.values.shape}"
        )
    mu = x.values.mean(axis=-1, keepdims=True)
    centered = x.values - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = centered * inv_std
    out_vals = xhat * gain.values + bias.values

    def backward(g):
        dxhat = g * gain.values
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=axes)
        dbias = g.sum(axis=axes)
        return (dx, dgain, dbias)

    return Tensor(out_vals, (x, gain, bias), backward)


def weighted_sum(weights, rows):
    """Combine rows by scalar weights: (..., L, 1) x (..., L, d) -> (..., d)."""
    wv, rv = weights.values, rows.values
    if wv.shape[-1] != 1 or wv.shape[:-1] != rv.shape[:-1]:
        raise ShapeError(f"weighted_sum: shapes {wv.shape} and {rv.shape} incompatible")
    out_vals = (wv * rv).sum(axis=-2)

    def backward(g):
        dw = np.einsum("...ld,...d->...l", rv, g)[..., None]
        dr = wv * np.expand_dims(g, -2)
        return (dw, dr)

    return Tensor(out_vals, (weights, rows), backward)


def dropout(x, rate, rng, training):
    """Inverted dropout: kept activations are divided by the keep rate."""
    if not training or rate == 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.values.shape) < keep) / keep
    return Tensor(x.values * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# Finite-difference gradient verification


def grad_check(f, params, h=1e-5):
    """Worst relative error between analytic and central-difference gradients.

    ``f`` is a scalar-valued function of the (in-place mutated) parameter
    tensors. The relative error per coordinate is |a - n| / max(|a|, |n|, 1),
    which degrades to absolute error when both gradients vanish.
    """
    return max(err for _, err in grad_check_report(f, params, h=h))


def grad_check_report(f, params, h=1e-5):
    """Per-parameter worst relative error, as (name, error) pairs."""
    for p in params:
        p.zero_grad()
    out = f()
    if not np.isfinite(out.values).all():
        raise NumericError("grad_check: objective is not finite")
    out.backward()
    analytic = [np.zeros_like(p.values) if p.grad is None else p.grad.copy() for p in params]

    report = []
    for p, a in zip(params, analytic):
        worst = 0.0
        flat = p.values.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().values)
            flat[i] = orig - h
            f_minus = float(f().values)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError("grad_check: perturbed objective is not finite")
            numeric = (f_plus - f_minus) / (2.0 * h)
            ai = a.reshape(-1)[i]
            err = abs(ai - numeric) / max(abs(ai), abs(numeric), 1.0)
            worst = max(worst, err)
        report.append((p.name or f"param{id(p)}", worst))
    return report
