"""Forward operations with their reverse-mode rules.

Every op accepts :class:`Tensor` (or array-likes, treated as constants) and
returns a new :class:`Tensor`. Batched shapes broadcast the NumPy way.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, check_finite, make_result

LOG_2PI = math.log(2.0 * math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after NumPy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.value + b.value, "add", (a, b), grad_fn)


add_bias = add


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(a.value - b.value, "sub", (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)

    def grad_fn(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return make_result(a.value * b.value, "mul", (a, b), grad_fn)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return make_result(a.value * c, "scale", (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def grad_fn(g):
        ga = _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape)
        return ga, gb

    return make_result(a.value @ b.value, "matmul", (a, b), grad_fn)


def linear(x, W, b=None) -> Tensor:
    """``x @ W + b`` with ``W`` of shape (in, out)."""
    x, W = as_tensor(x), as_tensor(W)
    if W.value.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} and {W.shape}")
    out = x.value @ W.value
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[1],):
            raise ShapeError(f"linear: bias shape {b.shape} does not match {W.shape}")
        out = out + b.value

    def grad_fn(g):
        gx = g @ W.value.T
        x2 = x.value.reshape(-1, x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        gW = x2.T @ g2
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    inputs = (x, W) if b is None else (x, W, b)
    return make_result(out, "linear", inputs, grad_fn)


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.value > 0
    return make_result(np.where(pos, x.value, 0.0), "relu", (x,), lambda g: (g * pos,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.value)
    return make_result(out, "exp", (x,), lambda g: (g * out,))


def clip(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.value >= lo) & (x.value <= hi)
    return make_result(np.clip(x.value, lo, hi), "clip", (x,), lambda g: (g * inside,))


def _softmax(s: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):  # fully masked rows become NaN and are caught later
        s = s - s.max(axis=-1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    return p * (g - (g * p).sum(axis=-1, keepdims=True))


def softmax_rows(m, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` is boolean, broadcastable to ``m``; False entries get an
    additive -inf before normalisation and therefore weight exactly 0.
    Each row needs at least one permitted entry.
    """
    m = as_tensor(m)
    s = m.value
    if mask is not None:
        s = np.where(mask, s, -np.inf)
    p = _softmax(s)
    return make_result(p, "softmax_rows", (m,), lambda g: (_softmax_backward(p, g),))


def scaled_dot_attention(q, k, v, mask: np.ndarray | None = None,
                         weights_out: list | None = None) -> Tensor:
    """softmax(q kᵀ / sqrt(dk) + mask) v over the last two axes.

    ``mask`` is boolean (True = may attend), broadcastable to the score
    shape ``(..., n_q, n_k)``. If ``weights_out`` is a list the post-softmax
    weights are appended to it.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: incompatible shapes q{q.shape} k{k.shape} v{v.shape}")
    c = 1.0 / math.sqrt(q.shape[-1])
    s = (q.value @ np.swapaxes(k.value, -1, -2)) * c
    if mask is not None:
        s = np.where(mask, s, -np.inf)
    p = check_finite(_softmax(s), "attention weights")
    if weights_out is not None:
        weights_out.append(p)

    def grad_fn(g):
        gv = np.swapaxes(p, -1, -2) @ g
        gs = _softmax_backward(p, g @ np.swapaxes(v.value, -1, -2)) * c
        gq = gs @ k.value
        gk = np.swapaxes(gs, -1, -2) @ q.value
        return (_unbroadcast(gq, q.shape), _unbroadcast(gk, k.shape),
                _unbroadcast(gv, v.shape))

    return make_result(p @ v.value, "scaled_dot_attention", (q, k, v), grad_fn)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        out = x.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} to {tuple(shape)}") from None
    return make_result(out, "reshape", (x,), lambda g: (g.reshape(old),))


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    inv = np.argsort(axes)
    return make_result(np.transpose(x.value, axes), "transpose", (x,),
                       lambda g: (np.transpose(g, inv),))


def concat_last_dim(xs: Sequence) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    lead = {x.shape[:-1] for x in xs}
    if len(lead) != 1:
        raise ShapeError(f"concat_last_dim: incompatible shapes {[x.shape for x in xs]}")
    cuts = np.cumsum([x.shape[-1] for x in xs])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, cuts, axis=-1))

    return make_result(np.concatenate([x.value for x in xs], axis=-1),
                       "concat_last_dim", xs, grad_fn)


def slice_rows(x, index) -> Tensor:
    """Select rows (axis -2) by an integer index array."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.intp)
    n = x.shape[-2]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise ShapeError(f"slice_rows: index out of range for shape {x.shape}")

    def grad_fn(g):
        out = np.zeros_like(x.value)
        np.add.at(out, (Ellipsis, idx, slice(None)), g)
        return (out,)

    return make_result(x.value[..., idx, :], "slice_rows", (x,), grad_fn)


def reduce_sum(x) -> Tensor:
    x = as_tensor(x)
    return make_result(np.array(x.value.sum()), "reduce_sum", (x,),
                       lambda g: (np.broadcast_to(g, x.shape).copy(),))


def reduce_mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.value.size
    return make_result(np.array(x.value.mean()), "reduce_mean", (x,),
                       lambda g: (np.full(x.shape, float(g) / n),))


def weighted_sum(x, w: np.ndarray) -> Tensor:
    """Scalar ``sum(w * x)`` with constant weights ``w``."""
    x = as_tensor(x)
    w = np.broadcast_to(np.asarray(w, dtype=np.float64), x.shape)
    return make_result(np.array((w * x.value).sum()), "weighted_sum", (x,),
                       lambda g: (float(g) * w,))


def square_error(h, y, dim_weight: np.ndarray | None = None) -> Tensor:
    """Per-row squared Euclidean error, summed over the last axis.

    ``dim_weight`` (0/1) restricts the sum to selected dimensions.
    """
    h, y = as_tensor(h), as_tensor(y)
    if h.shape != y.shape:
        raise ShapeError(f"square_error: shapes {h.shape} and {y.shape} differ")
    diff = h.value - y.value
    if dim_weight is not None:
        diff = diff * dim_weight

    def grad_fn(g):
        gd = 2.0 * g[..., None] * diff
        if dim_weight is not None:
            gd = gd * dim_weight
        return gd, -gd

    return make_result((diff * diff).sum(axis=-1), "square_error", (h, y), grad_fn)


def gaussian_nll(y, mu, log_sigma, dim_weight: np.ndarray | None = None) -> Tensor:
    """Per-row negative log-density of a diagonal Gaussian.

    ``log_sigma`` is the log standard deviation.
    """
    y, mu, log_sigma = as_tensor(y), as_tensor(mu), as_tensor(log_sigma)
    if not (y.shape == mu.shape == log_sigma.shape):
        raise ShapeError(f"gaussian_nll: shapes {y.shape}, {mu.shape}, {log_sigma.shape} differ")
    inv_var = np.exp(-2.0 * log_sigma.value)
    r = y.value - mu.value
    terms = log_sigma.value + 0.5 * r * r * inv_var + 0.5 * LOG_2PI
    w = np.ones_like(terms) if dim_weight is None else np.broadcast_to(dim_weight, terms.shape)

    def grad_fn(g):
        gg = g[..., None] * w
        g_r = gg * r * inv_var
        g_ls = gg * (1.0 - r * r * inv_var)
        return g_r, -g_r, g_ls

    return make_result((terms * w).sum(axis=-1), "gaussian_nll", (y, mu, log_sigma), grad_fn)
