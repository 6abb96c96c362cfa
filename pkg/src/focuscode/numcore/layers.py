"""Forward/backward pairs for the dense layers used by both models.

Every ``*_forward`` returns ``(output, cache)``; the matching
``*_backward(dy, cache)`` returns gradients for the inputs (and parameters,
where the layer has any). :func:`layer_backward` dispatches by name.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import InvalidArgument, PreconditionError
from .lstm import lstm_backward


def softmax(v, axis=-1):
    v = np.asarray(v)
    if v.size == 0 or v.shape[axis] == 0:
        raise InvalidArgument("softmax of an empty vector")
    z = v - v.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v, axis=-1):
    v = np.asarray(v)
    if v.size == 0 or v.shape[axis] == 0:
        raise InvalidArgument("log_softmax of an empty vector")
    z = v - v.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


# linear: y = x @ W.T + b over the last axis

def linear_forward(x, w, b):
    return x @ w.T + b, (x, w)


def linear_backward(dy, cache):
    x, w = cache
    out, inp = w.shape
    dx = dy @ w
    dw = dy.reshape(-1, out).T @ x.reshape(-1, inp)
    db = dy.reshape(-1, out).sum(axis=0)
    return dx, dw, db


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(dy, cache):
    return dy * (1.0 - cache * cache)


def sigmoid_forward(x):
    y = expit(x)
    return y, y


def sigmoid_backward(dy, cache):
    return dy * cache * (1.0 - cache)


def masked_softmax_forward(scores, mask):
    """Softmax over the last axis restricted to ``mask > 0`` entries.

    Rows with no valid entry produce all zeros.
    """
    valid = mask > 0
    z = np.where(valid, scores, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.where(valid, np.exp(np.where(valid, scores - zmax, 0.0)), 0.0)
    s = e.sum(axis=-1, keepdims=True)
    p = e / np.where(s > 0, s, 1.0)
    return p, p


def softmax_backward(dp, cache):
    p = cache
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def log_softmax_forward(x):
    y = log_softmax(x)
    return y, y


def log_softmax_backward(dy, cache):
    return dy - np.exp(cache) * dy.sum(axis=-1, keepdims=True)


def embedding_forward(ids, table):
    return table[ids], (ids, table.shape)


def embedding_backward(dy, cache):
    ids, shape = cache
    d = np.zeros(shape, dtype=dy.dtype)
    np.add.at(d, ids.reshape(-1), dy.reshape(-1, shape[1]))
    return d


def concat_forward(parts):
    sizes = [p.shape[-1] for p in parts]
    return np.concatenate(parts, axis=-1), sizes


def concat_backward(dy, cache):
    out = []
    start = 0
    for n in cache:
        out.append(dy[..., start:start + n])
        start += n
    return out


def masked_mean_forward(h, mask):
    """Mean over the leading (time) axis of ``h`` (T, B, H) at valid steps."""
    m = mask[..., None].astype(h.dtype)
    n = np.maximum(m.sum(axis=0), 1.0)
    return (h * m).sum(axis=0) / n, (m, n)


def masked_mean_backward(dy, cache):
    m, n = cache
    return m * (dy / n)[None]


def masked_max_forward(h, mask):
    """Coordinate-wise max over valid time steps; first index wins ties."""
    z = np.where(mask[..., None] > 0, h, -np.inf)
    idx = np.argmax(z, axis=0)
    y = np.take_along_axis(h, idx[None], axis=0)[0]
    return y, (idx, h.shape)


def masked_max_backward(dy, cache):
    idx, shape = cache
    dh = np.zeros(shape, dtype=dy.dtype)
    np.put_along_axis(dh, idx[None], dy[None], axis=0)
    return dh


def weighted_sum_forward(alpha, h):
    """e[b] = sum_t alpha[b, t] * h[t, b]; alpha is (B, T), h is (T, B, H)."""
    return np.einsum("bt,tbh->bh", alpha, h), (alpha, h)


def weighted_sum_backward(dy, cache):
    alpha, h = cache
    dalpha = np.einsum("bh,tbh->bt", dy, h)
    dh = np.einsum("bt,bh->tbh", alpha, dy)
    return dalpha, dh


def squared_error(pred, target, mask=None):
    diff = pred - target
    if mask is not None:
        diff = diff * mask
    return float((diff * diff).sum()), 2.0 * diff


_BACKWARD = {
    "linear": linear_backward,
    "tanh": tanh_backward,
    "sigmoid": sigmoid_backward,
    "softmax": softmax_backward,
    "log_softmax": log_softmax_backward,
    "embedding": embedding_backward,
    "concat": concat_backward,
    "mean": masked_mean_backward,
    "max": masked_max_backward,
    "weighted_sum": weighted_sum_backward,
    "lstm": lstm_backward,
}


def layer_backward(layer: str, cache, dy):
    """Backward pass of the named layer given its forward cache."""
    if layer not in _BACKWARD:
        raise InvalidArgument(f"unknown layer {layer!r}")
    if cache is None:
        raise PreconditionError(f"{layer}: backward requested before forward")
    return _BACKWARD[layer](dy, cache)
