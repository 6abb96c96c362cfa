# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM recurrence, same contract as ``_lstm_py``.

Row-major buffers are handed to column-major BLAS by swapping operand
roles, so no transposed copies are made.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expf
from scipy.linalg.cython_blas cimport dgemm, sgemm

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline real _clamp(real x) noexcept nogil:
    # keeps exp() finite in float32
    if x > 40:
        return 40
    if x < -40:
        return -40
    return x


cdef inline real _exp(real x) noexcept nogil:
    if real is float:
        return expf(x)
    else:
        return exp(x)


cdef inline void _activate_row(real *a, int H) noexcept nogil:
    """Gate pre-activations -> (sigmoid, sigmoid, tanh, sigmoid), in place.

    tanh(x) is computed as 2*sigmoid(2x) - 1 so every pass uses only exp
    and vectorizes.
    """
    cdef int j
    cdef real x
    for j in range(2 * H):
        x = _clamp(a[j])
        a[j] = 1 / (1 + _exp(-x))
    for j in range(2 * H, 3 * H):
        x = _clamp(a[j])
        a[j] = 2 / (1 + _exp(-2 * x)) - 1
    for j in range(3 * H, 4 * H):
        x = _clamp(a[j])
        a[j] = 1 / (1 + _exp(-x))


cdef inline void _cell_row(real *a, real *c_prev, real *c_new, real *tc, real *h_new,
                           int H) noexcept nogil:
    cdef int j
    cdef real c_, x
    for j in range(H):
        c_ = a[H + j] * c_prev[j] + a[j] * a[2 * H + j]
        c_new[j] = c_
        x = _clamp(c_)
        tc[j] = 2 / (1 + _exp(-2 * x)) - 1
        h_new[j] = a[3 * H + j] * tc[j]


cdef inline void _gemm(char *ta, char *tb, int m, int n, int k, real *a, int lda,
                       real *b, int ldb, real beta, real *c, int ldc) noexcept nogil:
    cdef real alpha = 1.0
    if real is float:
        sgemm(ta, tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(ta, tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def _forward(real[:, :, ::1] xp, real[:, ::1] wh, real[:, ::1] mask,
             real[:, :, ::1] hs, real[:, :, ::1] cs,
             real[:, :, ::1] gates, real[:, :, ::1] tc):
    cdef int T = xp.shape[0]
    cdef int B = xp.shape[1]
    cdef int G = xp.shape[2]
    cdef int H = G // 4
    cdef int t, b, j
    cdef real[::1] scratch_c = np.empty(max(H, 1), dtype=np.asarray(xp).dtype)
    cdef real[::1] scratch_h = np.empty(max(H, 1), dtype=np.asarray(xp).dtype)
    cdef char *tr = b"T"
    cdef char *nt = b"N"
    if T == 0 or B == 0 or H == 0:
        return
    with nogil:
        for t in range(T):
            for b in range(B):
                for j in range(G):
                    gates[t, b, j] = xp[t, b, j]
            # gates[t] (B x G) += hs[t] (B x H) @ wh.T (H x G)
            _gemm(tr, nt, G, B, H, &wh[0, 0], H, &hs[t, 0, 0], H, 1.0,
                  &gates[t, 0, 0], G)
            for b in range(B):
                _activate_row(&gates[t, b, 0], H)
                if mask[t, b] > 0:
                    _cell_row(&gates[t, b, 0], &cs[t, b, 0], &cs[t + 1, b, 0],
                              &tc[t, b, 0], &hs[t + 1, b, 0], H)
                else:
                    _cell_row(&gates[t, b, 0], &cs[t, b, 0], &scratch_c[0],
                              &tc[t, b, 0], &scratch_h[0], H)
                    for j in range(H):
                        cs[t + 1, b, j] = cs[t, b, j]
                        hs[t + 1, b, j] = hs[t, b, j]


def _backward(real[:, :, ::1] dh_out, real[:, ::1] wh, real[:, ::1] mask,
              real[:, :, ::1] cs, real[:, :, ::1] gates, real[:, :, ::1] tc,
              real[:, :, ::1] dxp, real[:, ::1] dh_next, real[:, ::1] dc_next):
    cdef int T = gates.shape[0]
    cdef int B = gates.shape[1]
    cdef int G = gates.shape[2]
    cdef int H = G // 4
    cdef int t, b, j
    cdef real dh, dc, i_, f_, g_, o_, tcn
    cdef char *nt = b"N"
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                if mask[t, b] > 0:
                    for j in range(H):
                        dh = dh_out[t, b, j] + dh_next[b, j]
                        i_ = gates[t, b, j]
                        f_ = gates[t, b, H + j]
                        g_ = gates[t, b, 2 * H + j]
                        o_ = gates[t, b, 3 * H + j]
                        tcn = tc[t, b, j]
                        dc = dc_next[b, j] + dh * o_ * (1 - tcn * tcn)
                        dxp[t, b, j] = dc * g_ * i_ * (1 - i_)
                        dxp[t, b, H + j] = dc * cs[t, b, j] * f_ * (1 - f_)
                        dxp[t, b, 2 * H + j] = dc * i_ * (1 - g_ * g_)
                        dxp[t, b, 3 * H + j] = dh * tcn * o_ * (1 - o_)
                        dh_next[b, j] = 0
                        dc_next[b, j] = dc * f_
                else:
                    for j in range(H):
                        dh_next[b, j] = dh_out[t, b, j] + dh_next[b, j]
                    for j in range(G):
                        dxp[t, b, j] = 0
            if B > 0 and H > 0:
                # dh_next (B x H) += dxp[t] (B x G) @ wh (G x H)
                _gemm(nt, nt, H, B, G, &wh[0, 0], H, &dxp[t, 0, 0], G, 1.0,
                      &dh_next[0, 0], H)
