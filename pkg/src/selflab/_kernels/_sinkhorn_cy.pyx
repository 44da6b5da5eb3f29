# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Sinkhorn sweep loops.

Hot kernels for the transport solver: one sweep rescales rows to the target
row marginal, then columns to the target column marginal; the row-sum error
is measured after the full sweep. Mirrors _sinkhorn_np exactly, sweep for
sweep, so either backend may serve behind the same solver interface.
"""

import numpy as np

from libc.math cimport exp, fabs, log, isinf, INFINITY


cdef double _row_lse(const double[:, ::1] x, const double[::1] add, Py_ssize_t i) noexcept nogil:
    # log-sum-exp over row i of (x + add[j]); -inf rows stay -inf
    cdef Py_ssize_t j, n = x.shape[1]
    cdef double m = -INFINITY
    cdef double v, s = 0.0
    for j in range(n):
        v = x[i, j] + add[j]
        if v > m:
            m = v
    if isinf(m) and m < 0:
        return -INFINITY
    for j in range(n):
        v = x[i, j] + add[j]
        s += exp(v - m)
    return m + log(s)


def log_sinkhorn(const double[:, ::1] logk, const double[::1] log_r,
                 const double[::1] log_h, const double[::1] r,
                 double tol, int max_iters):
    """Log-domain sweeps: returns (f, g, iterations, row_error, converged)."""
    cdef Py_ssize_t c = logk.shape[0]
    cdef Py_ssize_t n = logk.shape[1]
    f_arr = np.zeros(c, dtype=np.float64)
    g_arr = np.zeros(n, dtype=np.float64)
    row_lse_arr = np.empty(c, dtype=np.float64)
    col_m_arr = np.empty(n, dtype=np.float64)
    col_s_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] f = f_arr
    cdef double[::1] g = g_arr
    cdef double[::1] row_lse = row_lse_arr
    cdef double[::1] col_m = col_m_arr
    cdef double[::1] col_s = col_s_arr
    cdef Py_ssize_t i, j
    cdef int sweep, iters = 0
    cdef double v, rowsum, err = INFINITY
    cdef bint converged = False

    with nogil:
        for i in range(c):
            row_lse[i] = _row_lse(logk, g, i)
        for sweep in range(1, max_iters + 1):
            # row step: f pins row sums to r (f = -inf where r = 0)
            for i in range(c):
                f[i] = log_r[i] - row_lse[i]
            # column step, column-wise LSE of logk + f accumulated row-major
            for j in range(n):
                col_m[j] = -INFINITY
            for i in range(c):
                if isinf(f[i]) and f[i] < 0:
                    continue
                for j in range(n):
                    v = logk[i, j] + f[i]
                    if v > col_m[j]:
                        col_m[j] = v
            for j in range(n):
                col_s[j] = 0.0
            for i in range(c):
                if isinf(f[i]) and f[i] < 0:
                    continue
                for j in range(n):
                    col_s[j] += exp(logk[i, j] + f[i] - col_m[j])
            for j in range(n):
                if isinf(col_m[j]) and col_m[j] < 0:
                    g[j] = -INFINITY
                else:
                    g[j] = log_h[j] - (col_m[j] + log(col_s[j]))
            # error pass doubles as the cache for the next row step
            err = 0.0
            for i in range(c):
                row_lse[i] = _row_lse(logk, g, i)
                if isinf(f[i]) and f[i] < 0:
                    rowsum = 0.0
                else:
                    rowsum = exp(f[i] + row_lse[i])
                if fabs(rowsum - r[i]) > err:
                    err = fabs(rowsum - r[i])
            iters = sweep
            if err <= tol:
                converged = True
                break

    return f_arr, g_arr, iters, err, converged


def plain_sinkhorn(const double[:, ::1] k, const double[::1] r,
                   const double[::1] h, double tol, int max_iters):
    """Multiplicative sweeps: returns (u, v, iterations, row_error, converged)."""
    cdef Py_ssize_t c = k.shape[0]
    cdef Py_ssize_t n = k.shape[1]
    u_arr = np.ones(c, dtype=np.float64)
    v_arr = np.ones(n, dtype=np.float64)
    kv_arr = np.empty(c, dtype=np.float64)
    ktu_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] kv = kv_arr
    cdef double[::1] ktu = ktu_arr
    cdef Py_ssize_t i, j
    cdef int sweep, iters = 0
    cdef double s, rowsum, err = INFINITY
    cdef bint converged = False, finite = True

    with nogil:
        for i in range(c):
            s = 0.0
            for j in range(n):
                s += k[i, j]
            kv[i] = s
        for sweep in range(1, max_iters + 1):
            for i in range(c):
                u[i] = r[i] / kv[i] if r[i] > 0.0 else 0.0
            for j in range(n):
                ktu[j] = 0.0
            for i in range(c):
                for j in range(n):
                    ktu[j] += k[i, j] * u[i]
            for j in range(n):
                v[j] = h[j] / ktu[j] if h[j] > 0.0 else 0.0
            err = 0.0
            finite = True
            for i in range(c):
                s = 0.0
                for j in range(n):
                    s += k[i, j] * v[j]
                kv[i] = s
                rowsum = u[i] * s
                if rowsum != rowsum or isinf(rowsum):
                    finite = False
                if fabs(rowsum - r[i]) > err:
                    err = fabs(rowsum - r[i])
            iters = sweep
            if not finite:
                err = INFINITY
                break
            if err <= tol:
                converged = True
                break

    return u_arr, v_arr, iters, err, converged
