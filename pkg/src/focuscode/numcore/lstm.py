"""LSTM cell, full-sequence forward pass and backpropagation through time."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import InvalidArgument, PreconditionError
from . import _lstm_py

try:
    from . import _lstm_ext
except ImportError:  # extension not built
    _lstm_ext = None

_BACKEND = "compiled" if _lstm_ext is not None else "python"
if os.environ.get("FOCUSCODE_BACKEND", "").lower() == "python":
    _BACKEND = "python"


def backend() -> str:
    """Name of the active recurrence backend: ``"compiled"`` or ``"python"``."""
    return _BACKEND


def set_backend(name: str) -> None:
    global _BACKEND
    if name not in ("compiled", "python"):
        raise InvalidArgument(f"unknown backend {name!r}")
    if name == "compiled" and _lstm_ext is None:
        raise InvalidArgument("compiled backend is not available in this build")
    _BACKEND = name


def compiled_available() -> bool:
    return _lstm_ext is not None


@dataclass
class LstmCellParams:
    """Stacked gate weights, gate order (input, forget, candidate, output).

    ``wx`` is (4H, d_in), ``wh`` is (4H, H), ``b`` is (4H,).
    """

    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        g, h = self.wh.shape
        if g != 4 * h or self.wx.shape[0] != g or self.b.shape != (g,):
            raise InvalidArgument(
                f"inconsistent LSTM shapes wx={self.wx.shape} wh={self.wh.shape} b={self.b.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.wx.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.wh.shape[1]

    @classmethod
    def from_params(cls, params: dict, prefix: str) -> "LstmCellParams":
        return cls(params[prefix + ".wx"], params[prefix + ".wh"], params[prefix + ".b"])


def _use_compiled(dtype) -> bool:
    return _BACKEND == "compiled" and dtype in (np.float32, np.float64)


def lstm_step(x, h_prev, c_prev, p: LstmCellParams):
    """One LSTM cell update. Works on single vectors or (B, .) batches."""
    x = np.asarray(x)
    h_prev = np.asarray(h_prev)
    c_prev = np.asarray(c_prev)
    H = p.hidden_size
    if x.shape[-1] != p.input_size or h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise InvalidArgument(
            f"lstm_step shape mismatch: x{x.shape} h{h_prev.shape} c{c_prev.shape} "
            f"for d_in={p.input_size}, d_h={H}"
        )
    a = x @ p.wx.T + h_prev @ p.wh.T + p.b
    i = expit(a[..., :H])
    f = expit(a[..., H:2 * H])
    g = np.tanh(a[..., 2 * H:3 * H])
    o = expit(a[..., 3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


@dataclass
class LstmCache:
    x: np.ndarray
    mask: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray
    tc: np.ndarray
    p: LstmCellParams


def lstm_forward(x, mask, p: LstmCellParams):
    """Run the cell over a padded, time-major batch.

    x: (T, B, d_in); mask: (T, B) with 1 for real tokens. Returns hidden
    states (T, B, H) and the cache for :func:`lstm_backward`. Padding must
    be trailing; masked steps repeat the previous state.
    """
    T, B, d = x.shape
    if d != p.input_size or mask.shape != (T, B):
        raise InvalidArgument(f"lstm_forward shape mismatch: x{x.shape} mask{mask.shape}")
    dtype = p.wh.dtype
    x = np.ascontiguousarray(x, dtype=dtype)
    mask = np.ascontiguousarray(mask, dtype=dtype)
    G = p.wh.shape[0]
    xp = (x.reshape(T * B, d) @ p.wx.T + p.b).reshape(T, B, G)
    xp = np.ascontiguousarray(xp, dtype=dtype)
    wh = np.ascontiguousarray(p.wh)
    if _use_compiled(dtype):
        H = G // 4
        hs = np.zeros((T + 1, B, H), dtype=dtype)
        cs = np.zeros((T + 1, B, H), dtype=dtype)
        gates = np.empty((T, B, G), dtype=dtype)
        tc = np.empty((T, B, H), dtype=dtype)
        _lstm_ext._forward(xp, wh, mask, hs, cs, gates, tc)
    else:
        hs, cs, gates, tc = _lstm_py.recurrence_forward(xp, wh, mask)
    return hs[1:], LstmCache(x, mask, hs, cs, gates, tc, p)


def lstm_backward(dh_out, cache: LstmCache):
    """Backpropagate ``dh_out`` (T, B, H), the loss gradient w.r.t. every
    returned hidden state, through time.

    Returns (dx, {"wx", "wh", "b"}).
    """
    if cache is None:
        raise PreconditionError("lstm_backward called without a forward cache")
    p = cache.p
    T, B, G = cache.gates.shape
    H = G // 4
    d = cache.x.shape[2]
    dh_out = np.ascontiguousarray(dh_out, dtype=cache.gates.dtype)
    if dh_out.shape != (T, B, H):
        raise InvalidArgument(f"upstream gradient shape {dh_out.shape} != {(T, B, H)}")
    wh = np.ascontiguousarray(p.wh)
    if _use_compiled(cache.gates.dtype):
        dxp = np.empty_like(cache.gates)
        dh_next = np.zeros((B, H), dtype=dxp.dtype)
        dc_next = np.zeros((B, H), dtype=dxp.dtype)
        _lstm_ext._backward(dh_out, wh, cache.mask, cache.cs, cache.gates, cache.tc,
                            dxp, dh_next, dc_next)
    else:
        dxp = _lstm_py.recurrence_backward(dh_out, wh, cache.mask, cache.cs, cache.gates, cache.tc)
    flat = dxp.reshape(T * B, G)
    grads = {
        "wx": flat.T @ cache.x.reshape(T * B, d),
        "wh": flat.T @ cache.hs[:-1].reshape(T * B, H),
        "b": flat.sum(axis=0),
    }
    dx = (flat @ p.wx).reshape(T, B, d)
    return dx, grads
