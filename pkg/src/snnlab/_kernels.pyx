# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused elementwise kernels for the LIF update, moment statistics and the
arctan surrogate. Semantics are identical to ``snnlab._fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport M_PI

cnp.import_array()

DEF RESET_NONE = 0
DEF RESET_SOFT = 1
DEF RESET_HARD = 2


def lif_update(double[::1] u, const double[::1] x_prev, const double[::1] drive,
               double beta, double theta, int reset, double[::1] spikes):
    """In-place LIF update over flat buffers; returns the spike count."""
    cdef Py_ssize_t i, n = u.shape[0]
    cdef Py_ssize_t count = 0
    cdef double v
    if x_prev.shape[0] != n or drive.shape[0] != n or spikes.shape[0] != n:
        raise ValueError("lif_update: buffer lengths differ")
    with nogil:
        for i in range(n):
            if reset == RESET_SOFT:
                v = drive[i] + beta * u[i] - x_prev[i] * theta
            elif reset == RESET_HARD:
                v = drive[i] + beta * u[i] * (1.0 - x_prev[i])
            else:
                v = drive[i] + beta * u[i]
            u[i] = v
            if v > theta:
                spikes[i] = 1.0
                count += 1
            else:
                spikes[i] = 0.0
    return count


def column_moments(const double[:, ::1] a):
    """Per-column (mean, m2, m3, m4) central moments, divide-by-N."""
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], i, j
    out_np = np.zeros((k, 4), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    cdef double d, d2
    if n == 0:
        raise ValueError("column_moments: empty input")
    with nogil:
        for i in range(n):
            for j in range(k):
                out[j, 0] += a[i, j]
        for j in range(k):
            out[j, 0] /= n
        for i in range(n):
            for j in range(k):
                d = a[i, j] - out[j, 0]
                d2 = d * d
                out[j, 1] += d2
                out[j, 2] += d2 * d
                out[j, 3] += d2 * d2
        for j in range(k):
            out[j, 1] /= n
            out[j, 2] /= n
            out[j, 3] /= n
    return out_np


def arctan_surrogate(const double[::1] u, double theta, double slope, double[::1] out):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double z
    if out.shape[0] != n:
        raise ValueError("arctan_surrogate: buffer lengths differ")
    with nogil:
        for i in range(n):
            z = M_PI * slope * (u[i] - theta)
            out[i] = slope / (1.0 + z * z)
