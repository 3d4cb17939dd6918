# cython: language_level=3
"""Compiled Sinkhorn sweep loop.  Mirrors ``_pykernel.sinkhorn_sweeps`` exactly."""
from libc.math cimport exp, log, fabs, NAN, isnan

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double HI = 1e100
cdef double LO = 1e-100
cdef double FLUSH = 1e-280


cdef inline void _absorb(const long long[::1] rows, const long long[::1] cols,
                         double[::1] xi, double[::1] eta,
                         double[::1] u, double[::1] v, double[::1] K) noexcept nogil:
    cdef Py_ssize_t e, i, j
    for e in range(K.shape[0]):
        K[e] *= u[rows[e]] * v[cols[e]]
        if K[e] < FLUSH:
            K[e] = 0.0
    for i in range(xi.shape[0]):
        xi[i] += log(u[i])
        u[i] = 1.0
    for j in range(eta.shape[0]):
        eta[j] += log(v[j])
        v[j] = 1.0


cdef inline void _argsort(const double[::1] p, long long[::1] perm) noexcept nogil:
    # stable insertion sort by (p_i, i)
    cdef Py_ssize_t n = p.shape[0], a, b
    cdef long long key
    for a in range(n):
        perm[a] = a
    for a in range(1, n):
        key = perm[a]
        b = a - 1
        while b >= 0 and p[perm[b]] > p[key]:
            perm[b + 1] = perm[b]
            b -= 1
        perm[b + 1] = key


cdef inline void _row_pass(const long long[::1] rowptr, const long long[::1] cols,
                           const double[::1] K, const double[::1] v,
                           double[::1] s) noexcept nogil:
    # K in row-major (CSR) order
    cdef Py_ssize_t e, i
    cdef double acc
    for i in range(s.shape[0]):
        acc = 0.0
        for e in range(rowptr[i], rowptr[i + 1]):
            acc += K[e] * v[cols[e]]
        s[i] = acc


cdef inline bint _col_update(const long long[::1] colptr, const long long[::1] crows,
                             const double[::1] Kc, const double[::1] r,
                             const double[::1] c, const double[::1] s, double[::1] u,
                             double[::1] v) noexcept nogil:
    # u = r / s, then v = c / (K^T u) with K in column-major (CSC) order;
    # returns whether u or v left [LO, HI]
    cdef Py_ssize_t e, i, j
    cdef double acc
    cdef bint out = False
    for i in range(u.shape[0]):
        u[i] = r[i] / s[i]
        if u[i] > HI or u[i] < LO:
            out = True
    for j in range(v.shape[0]):
        acc = 0.0
        for e in range(colptr[j], colptr[j + 1]):
            acc += Kc[e] * u[crows[e]]
        v[j] = c[j] / acc
        if v[j] > HI or v[j] < LO:
            out = True
    return out


cdef inline void _sync_csc(const long long[::1] csc_order, const double[::1] K,
                           double[::1] Kc) noexcept nogil:
    cdef Py_ssize_t e
    for e in range(K.shape[0]):
        Kc[e] = K[csc_order[e]]


# rows/cols must be sorted row-major (NonnegMatrix guarantees this)
def sinkhorn_sweeps(const long long[::1] rows, const long long[::1] cols,
                    const double[::1] log_a, double[::1] values, double[::1] xi,
                    double[::1] eta, const double[::1] r, const double[::1] c,
                    long long n_iter, long long stride, long long k0,
                    int stop_mode, double tol, long long window,
                    double[::1] prev_p, long long[::1] rec_k,
                    double[:, ::1] rec_p, double[::1] rec_change):
    cdef Py_ssize_t n = xi.shape[0], m = eta.shape[0], nnz = log_a.shape[0]
    cdef Py_ssize_t e, i
    cdef long long it = 0, k, nrec = 0, stable = 0
    cdef double change, d
    cdef bint stop, same

    u_arr = np.ones(n)
    v_arr = np.ones(m)
    s_arr = np.empty(n)
    p_arr = np.empty(n)
    K_arr = np.array(values, dtype=np.float64)
    rows_np = np.asarray(rows)
    cols_np = np.asarray(cols)
    rowptr_arr = np.searchsorted(rows_np, np.arange(n + 1)).astype(np.int64)
    csc_arr = np.lexsort((rows_np, cols_np)).astype(np.int64)
    crows_arr = np.ascontiguousarray(rows_np[csc_arr], dtype=np.int64)
    colptr_arr = np.searchsorted(cols_np[csc_arr], np.arange(m + 1)).astype(np.int64)
    Kc_arr = np.empty(nnz)
    perm_arr = np.zeros(n, dtype=np.int64)
    last_arr = np.full(n, -1, dtype=np.int64)
    cdef double[::1] u = u_arr, v = v_arr, s = s_arr, p = p_arr, K = K_arr
    cdef long long[::1] perm = perm_arr, last = last_arr
    cdef long long[::1] rowptr = rowptr_arr, colptr = colptr_arr
    cdef long long[::1] csc_order = csc_arr, crows = crows_arr
    cdef double[::1] Kc = Kc_arr

    with nogil:
        for e in range(nnz):
            if K[e] < FLUSH:
                K[e] = 0.0
        _sync_csc(csc_order, K, Kc)
        if stop_mode == 0 and stride == 0:
            while it < n_iter:
                _row_pass(rowptr, cols, K, v, s)
                if _col_update(colptr, crows, Kc, r, c, s, u, v):
                    _absorb(rows, cols, xi, eta, u, v, K)
                    _sync_csc(csc_order, K, Kc)
                it += 1
            _row_pass(rowptr, cols, K, v, s)
            for i in range(n):
                prev_p[i] = u[i] * s[i]
        else:
            while True:
                k = k0 + it
                _row_pass(rowptr, cols, K, v, s)
                change = 0.0
                for i in range(n):
                    p[i] = u[i] * s[i]
                    if isnan(prev_p[i]):
                        change = NAN
                    elif not isnan(change):
                        d = fabs(p[i] - prev_p[i])
                        if d > change:
                            change = d
                if stop_mode == 2:
                    _argsort(p, perm)
                    same = it > 0
                    for i in range(n):
                        if perm[i] != last[i]:
                            same = False
                        last[i] = perm[i]
                    # a motionless p counts as settled: its reorderings are rounding noise
                    if same or (not isnan(change) and change < tol):
                        stable += 1
                    else:
                        stable = 0
                stop = it >= n_iter
                if stop_mode == 1 and not isnan(change) and change < tol:
                    stop = True
                if stop_mode == 2 and stable >= window:
                    stop = True
                if stride > 0 and (k % stride == 0 or stop):
                    rec_k[nrec] = k
                    rec_change[nrec] = change
                    for i in range(n):
                        rec_p[nrec, i] = p[i]
                    nrec += 1
                for i in range(n):
                    prev_p[i] = p[i]
                if stop:
                    break
                if _col_update(colptr, crows, Kc, r, c, s, u, v):
                    _absorb(rows, cols, xi, eta, u, v, K)
                    _sync_csc(csc_order, K, Kc)
                it += 1
        _absorb(rows, cols, xi, eta, u, v, K)
        for e in range(nnz):
            if K[e] == 0.0:
                K[e] = exp(log_a[e] + xi[rows[e]] + eta[cols[e]])
            values[e] = K[e]
    return it, nrec
