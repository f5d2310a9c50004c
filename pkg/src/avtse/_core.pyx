# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled fast lane for the per-frame hot kernels.

Same contracts as the pure-numpy versions in ``avtse.kernels``: fused row
layer-norm, fused LSTM cell step (BLAS gate matmuls + scalar gate loop),
and the single-query windowed attention step.  Shapes are small at frame
rate, so the wins come from fusing elementwise passes and skipping
python-level dispatch, not from asymptotics.
"""

import numpy as np

from libc.math cimport expf, sqrtf, tanhf
from scipy.linalg.cython_blas cimport sgemm


cdef inline float _sigmoid(float x) noexcept nogil:
    cdef float e
    if x >= 0.0:
        return 1.0 / (1.0 + expf(-x))
    e = expf(x)
    return e / (1.0 + e)


def layer_norm_rows(float[:, ::1] x, float[::1] gain, float[::1] bias,
                    double eps):
    """Per-row zero-mean/unit-variance then affine; x is (N, C)."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    out_arr = np.empty((n, c), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef float mu, var, d, inv
    cdef float feps = <float> eps
    with nogil:
        for i in range(n):
            mu = 0.0
            for j in range(c):
                mu += x[i, j]
            mu /= c
            var = 0.0
            for j in range(c):
                d = x[i, j] - mu
                var += d * d
            var /= c
            inv = 1.0 / sqrtf(var + feps)
            for j in range(c):
                out[i, j] = (x[i, j] - mu) * inv * gain[j] + bias[j]
    return out_arr


cdef void _matmul_nt(float[:, ::1] a, float[:, ::1] w, float[:, ::1] out,
                     float beta) noexcept nogil:
    """out (m, n) = a (m, k) @ w(n, k)^T  [+ beta * out], row-major views."""
    cdef int m = <int> a.shape[0]
    cdef int k = <int> a.shape[1]
    cdef int n = <int> w.shape[0]
    cdef float alpha = 1.0
    # row-major arrays are column-major transposes: out^T = w @ a^T
    sgemm("T", "N", &n, &m, &k, &alpha, &w[0, 0], &k, &a[0, 0], &k,
          &beta, &out[0, 0], &n)


def lstm_step(float[:, ::1] x, float[:, ::1] h, float[:, ::1] c,
              float[:, ::1] w_ih, float[:, ::1] w_hh, float[::1] b):
    """One LSTM cell update, gate order (i, f, g, o); returns (h2, c2)."""
    cdef Py_ssize_t batch = x.shape[0]
    cdef Py_ssize_t hid = h.shape[1]
    gates_arr = np.empty((batch, 4 * hid), dtype=np.float32)
    h2_arr = np.empty((batch, hid), dtype=np.float32)
    c2_arr = np.empty((batch, hid), dtype=np.float32)
    cdef float[:, ::1] gates = gates_arr
    cdef float[:, ::1] h2 = h2_arr
    cdef float[:, ::1] c2 = c2_arr
    cdef Py_ssize_t i, j
    cdef float gi, gf, gg, go, cn
    with nogil:
        _matmul_nt(x, w_ih, gates, 0.0)
        _matmul_nt(h, w_hh, gates, 1.0)
        for i in range(batch):
            for j in range(hid):
                gi = _sigmoid(gates[i, j] + b[j])
                gf = _sigmoid(gates[i, hid + j] + b[hid + j])
                gg = tanhf(gates[i, 2 * hid + j] + b[2 * hid + j])
                go = _sigmoid(gates[i, 3 * hid + j] + b[3 * hid + j])
                cn = gf * c[i, j] + gi * gg
                c2[i, j] = cn
                h2[i, j] = go * tanhf(cn)
    return h2_arr, c2_arr


def attention_step(float[:, ::1] q, float[:, :, ::1] kwin,
                   float[:, :, ::1] vwin, int n_heads):
    """softmax(q . K^T / sqrt(d)) . V for one query frame per (row, head)."""
    cdef Py_ssize_t batch = q.shape[0]
    cdef Py_ssize_t span = kwin.shape[1]
    cdef Py_ssize_t chan = q.shape[1]
    cdef Py_ssize_t d = chan // n_heads
    out_arr = np.empty((batch, chan), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    scores_arr = np.empty(span, dtype=np.float32)
    cdef float[::1] scores = scores_arr
    cdef Py_ssize_t bi, hi, li, ji, base
    cdef float scale, acc, mx, ssum, w
    scale = 1.0 / sqrtf(<float> d)
    with nogil:
        for bi in range(batch):
            for hi in range(n_heads):
                base = hi * d
                mx = -3.4e38
                for li in range(span):
                    acc = 0.0
                    for ji in range(d):
                        acc += q[bi, base + ji] * kwin[bi, li, base + ji]
                    acc *= scale
                    scores[li] = acc
                    if acc > mx:
                        mx = acc
                ssum = 0.0
                for li in range(span):
                    w = expf(scores[li] - mx)
                    scores[li] = w
                    ssum += w
                for ji in range(d):
                    out[bi, base + ji] = 0.0
                for li in range(span):
                    w = scores[li] / ssum
                    for ji in range(d):
                        out[bi, base + ji] += w * vwin[bi, li, base + ji]
    return out_arr
