"""Pure numpy LSTM recurrence. Reference backend and import-time fallback.

Both functions work on time-major arrays and take the input projection
``xp = x @ wx.T + b`` precomputed, so only the hidden-to-gate product is
inside the time loop. Gate order along the last axis is (i, f, g, o).

Padded steps (``mask[t, b] == 0``) carry the previous state forward
unchanged, so ``hs[-1]`` is always the last valid hidden state.
"""

import numpy as np
from scipy.special import expit


def recurrence_forward(xp, wh, mask):
    T, B, G = xp.shape
    H = G // 4
    hs = np.zeros((T + 1, B, H), dtype=xp.dtype)
    cs = np.zeros((T + 1, B, H), dtype=xp.dtype)
    gates = np.empty((T, B, G), dtype=xp.dtype)
    tc = np.empty((T, B, H), dtype=xp.dtype)
    for t in range(T):
        a = xp[t] + hs[t] @ wh.T
        i = expit(a[:, :H])
        f = expit(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = expit(a[:, 3 * H:])
        c = f * cs[t] + i * g
        tcn = np.tanh(c)
        h = o * tcn
        m = (mask[t] > 0)[:, None]
        hs[t + 1] = np.where(m, h, hs[t])
        cs[t + 1] = np.where(m, c, cs[t])
        gates[t, :, :H] = i
        gates[t, :, H:2 * H] = f
        gates[t, :, 2 * H:3 * H] = g
        gates[t, :, 3 * H:] = o
        tc[t] = tcn
    return hs, cs, gates, tc


def recurrence_backward(dh_out, wh, mask, cs, gates, tc):
    """Return the gradient w.r.t. the gate pre-activations, shape (T, B, 4H)."""
    T, B, G = gates.shape
    H = G // 4
    dxp = np.empty_like(gates)
    dh_next = np.zeros((B, H), dtype=gates.dtype)
    dc_next = np.zeros((B, H), dtype=gates.dtype)
    for t in range(T - 1, -1, -1):
        m = (mask[t] > 0)[:, None]
        dh = dh_out[t] + dh_next
        dh_new = np.where(m, dh, 0.0)
        i = gates[t, :, :H]
        f = gates[t, :, H:2 * H]
        g = gates[t, :, 2 * H:3 * H]
        o = gates[t, :, 3 * H:]
        do = dh_new * tc[t]
        dc = np.where(m, dc_next, 0.0) + dh_new * o * (1.0 - tc[t] * tc[t])
        dxp[t, :, :H] = dc * g * i * (1.0 - i)
        dxp[t, :, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        dxp[t, :, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dxp[t, :, 3 * H:] = do * o * (1.0 - o)
        dh_next = np.where(m, 0.0, dh) + dxp[t] @ wh
        dc_next = np.where(m, 0.0, dc_next) + dc * f
    return dxp
