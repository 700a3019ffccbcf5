# cython: language_level=3
"""Compiled per-sample clip-and-sum kernel for local DPSGD iterations."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

DEF SOFTMAX = 0
DEF MLP = 1


cdef void _softmax_residual(double* z, Py_ssize_t k, Py_ssize_t label) noexcept nogil:
    cdef Py_ssize_t c
    cdef double m = z[0], s = 0.0
    for c in range(1, k):
        if z[c] > m:
            m = z[c]
    for c in range(k):
        z[c] = exp(z[c] - m)
        s += z[c]
    for c in range(k):
        z[c] = z[c] / s
    z[label] -= 1.0


def clipped_grad_sum(int kind, const double[::1] params, const double[:, ::1] x,
                     const cnp.int64_t[::1] y, Py_ssize_t num_classes,
                     Py_ssize_t hidden, double clip_bound):
    """Sum over rows of ``x`` of g / max(1, ||g|| / clip_bound)."""
    cdef Py_ssize_t n = x.shape[0], f = x.shape[1], k = num_classes, h = hidden
    cdef Py_ssize_t d = params.shape[0]
    out_arr = np.zeros(d, dtype=np.float64)
    cdef double[::1] out = out_arr
    z_arr = np.empty(k, dtype=np.float64)
    hid_arr = np.empty(max(h, 1), dtype=np.float64)
    dpre_arr = np.empty(max(h, 1), dtype=np.float64)
    cdef double[::1] z = z_arr, hid = hid_arr, dpre = dpre_arr
    cdef Py_ssize_t i, c, j, a, o_b1, o_w2, o_b2
    cdef double acc, xsq, hsq, rsq, dsq, norm, scale, r

    with nogil:
        for i in range(n):
            xsq = 0.0
            for a in range(f):
                xsq += x[i, a] * x[i, a]
            if kind == SOFTMAX:
                for c in range(k):
                    acc = params[k * f + c]
                    for a in range(f):
                        acc += params[c * f + a] * x[i, a]
                    z[c] = acc
                _softmax_residual(&z[0], k, y[i])
                rsq = 0.0
                for c in range(k):
                    rsq += z[c] * z[c]
                norm = sqrt(rsq * (xsq + 1.0))
                scale = 1.0 if norm <= clip_bound else clip_bound / norm
                for c in range(k):
                    r = scale * z[c]
                    for a in range(f):
                        out[c * f + a] += r * x[i, a]
                    out[k * f + c] += r
            else:
                o_b1 = h * f
                o_w2 = o_b1 + h
                o_b2 = o_w2 + k * h
                hsq = 0.0
                for j in range(h):
                    acc = params[o_b1 + j]
                    for a in range(f):
                        acc += params[j * f + a] * x[i, a]
                    hid[j] = tanh(acc)
                    hsq += hid[j] * hid[j]
                for c in range(k):
                    acc = params[o_b2 + c]
                    for j in range(h):
                        acc += params[o_w2 + c * h + j] * hid[j]
                    z[c] = acc
                _softmax_residual(&z[0], k, y[i])
                rsq = 0.0
                for c in range(k):
                    rsq += z[c] * z[c]
                dsq = 0.0
                for j in range(h):
                    acc = 0.0
                    for c in range(k):
                        acc += z[c] * params[o_w2 + c * h + j]
                    dpre[j] = acc * (1.0 - hid[j] * hid[j])
                    dsq += dpre[j] * dpre[j]
                norm = sqrt(rsq * (hsq + 1.0) + dsq * (xsq + 1.0))
                scale = 1.0 if norm <= clip_bound else clip_bound / norm
                for j in range(h):
                    r = scale * dpre[j]
                    for a in range(f):
                        out[j * f + a] += r * x[i, a]
                    out[o_b1 + j] += r
                for c in range(k):
                    r = scale * z[c]
                    for j in range(h):
                        out[o_w2 + c * h + j] += r * hid[j]
                    out[o_b2 + c] += r
    return out_arr
