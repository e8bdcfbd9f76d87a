# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo kernels; see ``_pykernels`` for the reference versions."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def permuted_prefix_sums(q, u):
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t L = uv.shape[0], n = uv.shape[1]
    out = np.zeros((L, n + 1))
    cdef double[:, ::1] ov = out
    cdef cnp.int64_t[::1] perm = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t l, k, j
    cdef cnp.int64_t t
    cdef double acc
    with nogil:
        for l in range(L):
            for k in range(n):
                perm[k] = k
            for k in range(n - 1):
                j = k + <Py_ssize_t>(uv[l, k] * <double>(n - k))
                if j > n - 1:
                    j = n - 1
                t = perm[k]
                perm[k] = perm[j]
                perm[j] = t
            acc = 0.0
            for k in range(n):
                acc = acc + qv[perm[k]]
                ov[l, k + 1] = acc
    return out


def subset_sums(q, Py_ssize_t m):
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = qv.shape[0]
    if m == 0:
        return np.zeros(1)
    cdef Py_ssize_t total = 1, i, k = min(m, n - m)
    for i in range(k):  # C(n, k) with k <= n/2 keeps the running product small
        total = total * (n - i) // (i + 1)
    out = np.zeros(total)
    cdef double[::1] ov = out
    cdef cnp.int64_t[::1] idx = np.arange(m, dtype=np.int64)
    cdef Py_ssize_t c, r = 0
    cdef double acc
    while True:
        acc = 0.0
        for c in range(m):
            acc = acc + qv[idx[c]]
        ov[r] = acc
        r += 1
        c = m - 1
        while c >= 0 and idx[c] == n - m + c:
            c -= 1
        if c < 0:
            break
        idx[c] += 1
        for i in range(c + 1, m):
            idx[i] = idx[i - 1] + 1
    return out


cdef inline Py_ssize_t _upper_bound(const double[::1] a, Py_ssize_t lo, Py_ssize_t hi, double x) noexcept nogil:
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def draw_stratum(cdf, row_offsets, values, u_count, u_pick):
    cdef const double[::1] cv = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef const cnp.int64_t[::1] rv = np.ascontiguousarray(row_offsets, dtype=np.int64)
    cdef const double[::1] vv = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] uc = np.ascontiguousarray(u_count, dtype=np.float64)
    cdef const double[::1] up = np.ascontiguousarray(u_pick, dtype=np.float64)
    cdef Py_ssize_t B = uc.shape[0], n = cv.shape[0] - 1, b, m, start, size, pick
    out = np.empty(B)
    cdef double[::1] ov = out
    with nogil:
        for b in range(B):
            m = _upper_bound(cv, 0, n + 1, uc[b])
            if m > n:
                m = n
            start = rv[m]
            size = rv[m + 1] - start
            pick = <Py_ssize_t>(up[b] * <double>size)
            if pick > size - 1:
                pick = size - 1
            ov[b] = vv[start + pick]
    return out


def tail_counts(row_offsets, values, thresholds):
    # sorted thresholds let one forward walk per row replace B binary searches
    cdef const cnp.int64_t[::1] rv = np.ascontiguousarray(row_offsets, dtype=np.int64)
    cdef const double[::1] vv = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[::1] tv = np.sort(np.asarray(thresholds, dtype=np.float64))
    cdef Py_ssize_t nrows = rv.shape[0] - 1, B = tv.shape[0], m, b, j, hi
    out = np.zeros(nrows, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    cdef cnp.int64_t acc
    with nogil:
        for m in range(nrows):
            j = rv[m]
            hi = rv[m + 1]
            acc = 0
            for b in range(B):
                while j < hi and vv[j] < tv[b]:
                    j += 1
                acc = acc + (hi - j)
            ov[m] = acc
    return out
