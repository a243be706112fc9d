# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled mirror of ``pykernels``; same functions, C loops, float64 only."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()


def dense_linear(double[:, ::1] w, double[::1] b, double[::1] x):
    cdef Py_ssize_t m = w.shape[0], n = w.shape[1]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(m):
        acc = b[i]
        for j in range(n):
            acc += w[i, j] * x[j]
        y[i] = acc
    return out


def dense_tanh(double[:, ::1] w, double[::1] b, double[::1] x):
    cdef Py_ssize_t m = w.shape[0], n = w.shape[1]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(m):
        acc = b[i]
        for j in range(n):
            acc += w[i, j] * x[j]
        y[i] = tanh(acc)
    return out


def dense_relu(double[:, ::1] w, double[::1] b, double[::1] x):
    cdef Py_ssize_t m = w.shape[0], n = w.shape[1]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(m):
        acc = b[i]
        for j in range(n):
            acc += w[i, j] * x[j]
        y[i] = acc if acc > 0.0 else 0.0
    return out


def grad_dense(double[:, ::1] w, double[::1] x, double[::1] dy):
    cdef Py_ssize_t m = w.shape[0], n = w.shape[1]
    dw_arr = np.empty((m, n), dtype=np.float64)
    db_arr = np.empty(m, dtype=np.float64)
    dx_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef double[::1] dx = dx_arr
    cdef Py_ssize_t i, j
    cdef double g
    for i in range(m):
        g = dy[i]
        db[i] = g
        for j in range(n):
            dw[i, j] = g * x[j]
            dx[j] += w[i, j] * g
    return dw_arr, db_arr, dx_arr


def tanh_backward(double[::1] y, double[::1] dy):
    cdef Py_ssize_t n = y.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] d = out
    cdef Py_ssize_t i
    for i in range(n):
        d[i] = dy[i] * (1.0 - y[i] * y[i])
    return out


def relu_backward(double[::1] y, double[::1] dy):
    cdef Py_ssize_t n = y.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] d = out
    cdef Py_ssize_t i
    for i in range(n):
        d[i] = dy[i] if y[i] > 0.0 else 0.0
    return out


def softmax(double[::1] logits, double tau=1.0):
    cdef Py_ssize_t n = logits.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] p = out
    cdef Py_ssize_t i
    cdef double zmax, total, z
    zmax = logits[0] / tau
    for i in range(1, n):
        z = logits[i] / tau
        if z > zmax:
            zmax = z
    total = 0.0
    for i in range(n):
        z = exp(logits[i] / tau - zmax)
        p[i] = z
        total += z
    for i in range(n):
        p[i] /= total
    return out


def log_softmax(double[::1] logits):
    cdef Py_ssize_t n = logits.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] lp = out
    cdef Py_ssize_t i
    cdef double zmax, total
    zmax = logits[0]
    for i in range(1, n):
        if logits[i] > zmax:
            zmax = logits[i]
    total = 0.0
    for i in range(n):
        total += exp(logits[i] - zmax)
    total = log(total)
    for i in range(n):
        lp[i] = logits[i] - zmax - total
    return out


def categorical_from_uniform(probs, u):
    """Scalar path in C; vector draws fall back to the numpy implementation."""
    cdef double[::1] p
    cdef Py_ssize_t i, n
    cdef double cum, uu
    if np.isscalar(u) or getattr(u, "ndim", 0) == 0:
        p = np.ascontiguousarray(probs, dtype=np.float64)
        n = p.shape[0]
        uu = <double> u
        cum = 0.0
        for i in range(n):
            cum += p[i]
            if uu < cum:
                return <object> i
        return <object> (n - 1)
    from . import pykernels
    return pykernels.categorical_from_uniform(probs, u)
