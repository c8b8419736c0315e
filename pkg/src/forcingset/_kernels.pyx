# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled logistic-loss kernels.

Every reduction runs in a fixed sequential order over rows, so results are
bitwise reproducible for identical inputs.  ``X1`` is the design matrix with
the intercept column already appended.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs

cnp.import_array()


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _softplus(double z) nogil:
    # log(1 + e^z) without overflow
    if z > 0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


def logits(const double[:, ::1] X1, const double[::1] theta):
    cdef Py_ssize_t n = X1.shape[0], p = X1.shape[1], i, j
    cdef double s
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] z = out
    with nogil:
        for i in range(n):
            s = 0.0
            for j in range(p):
                s = s + X1[i, j] * theta[j]
            z[i] = s
    return out


def sample_losses(const double[:, ::1] X1, const double[::1] y, const double[::1] theta):
    cdef Py_ssize_t n = X1.shape[0], p = X1.shape[1], i, j
    cdef double z
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] loss = out
    with nogil:
        for i in range(n):
            z = 0.0
            for j in range(p):
                z = z + X1[i, j] * theta[j]
            loss[i] = _softplus((1.0 - 2.0 * y[i]) * z)
    return out


def sample_grads(const double[:, ::1] X1, const double[::1] y, const double[::1] theta):
    cdef Py_ssize_t n = X1.shape[0], p = X1.shape[1], i, j
    cdef double z, r
    out = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] g = out
    with nogil:
        for i in range(n):
            z = 0.0
            for j in range(p):
                z = z + X1[i, j] * theta[j]
            r = _sigmoid(z) - y[i]
            for j in range(p):
                g[i, j] = r * X1[i, j]
    return out


def loss_grad(const double[:, ::1] X1, const double[::1] y, const double[::1] theta):
    """Mean loss and mean gradient in one pass."""
    cdef Py_ssize_t n = X1.shape[0], p = X1.shape[1], i, j
    cdef double z, r, total = 0.0
    grad = np.zeros(p, dtype=np.float64)
    cdef double[::1] g = grad
    with nogil:
        for i in range(n):
            z = 0.0
            for j in range(p):
                z = z + X1[i, j] * theta[j]
            total = total + _softplus((1.0 - 2.0 * y[i]) * z)
            r = _sigmoid(z) - y[i]
            for j in range(p):
                g[j] = g[j] + r * X1[i, j]
        for j in range(p):
            g[j] = g[j] / n
    return total / n, grad


def hessian(const double[:, ::1] X1, const double[::1] theta):
    """Mean of sigma(1 - sigma) x x^T, mirrored so it is exactly symmetric."""
    cdef Py_ssize_t n = X1.shape[0], p = X1.shape[1], i, j, k
    cdef double z, s, w, wx
    out = np.zeros((p, p), dtype=np.float64)
    cdef double[:, ::1] H = out
    with nogil:
        for i in range(n):
            z = 0.0
            for j in range(p):
                z = z + X1[i, j] * theta[j]
            s = _sigmoid(z)
            w = s * (1.0 - s)
            for j in range(p):
                wx = w * X1[i, j]
                if wx == 0.0:
                    continue
                for k in range(j, p):
                    H[j, k] = H[j, k] + wx * X1[i, k]
        for j in range(p):
            for k in range(j, p):
                H[j, k] = H[j, k] / n
                H[k, j] = H[j, k]
    return out
