# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics must match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


def nearest(const double[:, ::1] A, const double[:, ::1] B):
    """For each row of ``B`` return (distance, index) of the closest row of ``A``."""
    cdef Py_ssize_t na = A.shape[0], nb = B.shape[0], n = A.shape[1]
    cdef Py_ssize_t i, j, c, bi
    cdef double acc, t, best
    dist = np.empty(nb, dtype=np.float64)
    idx = np.empty(nb, dtype=np.intp)
    cdef double[::1] dv = dist
    cdef Py_ssize_t[::1] iv = idx
    for j in range(nb):
        best = INFINITY
        bi = -1
        for i in range(na):
            acc = 0.0
            for c in range(n):
                t = B[j, c] - A[i, c]
                acc = acc + t * t
                if acc >= best:
                    break
            if acc < best:
                best = acc
                bi = i
        dv[j] = sqrt(best)
        iv[j] = bi
    return dist, idx


def knn(const double[:, ::1] A, const double[:, ::1] B, Py_ssize_t m):
    """Indices of the ``m`` closest rows of ``A`` for each row of ``B``, nearest first."""
    cdef Py_ssize_t na = A.shape[0], nb = B.shape[0], n = A.shape[1]
    cdef Py_ssize_t i, j, c, s, filled
    cdef double acc, t
    if m > na:
        m = na
    out = np.empty((nb, m), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] ov = out
    cdef double[::1] bd = np.empty(m if m > 0 else 1, dtype=np.float64)
    cdef Py_ssize_t[::1] bidx = np.empty(m if m > 0 else 1, dtype=np.intp)
    for j in range(nb):
        filled = 0
        for i in range(na):
            acc = 0.0
            for c in range(n):
                t = B[j, c] - A[i, c]
                acc = acc + t * t
            if filled == m and acc >= bd[m - 1]:
                continue
            # insertion keeps ties in index order
            s = filled if filled < m else m - 1
            while s > 0 and bd[s - 1] > acc:
                bd[s] = bd[s - 1]
                bidx[s] = bidx[s - 1]
                s -= 1
            bd[s] = acc
            bidx[s] = i
            if filled < m:
                filled += 1
        for s in range(m):
            ov[j, s] = bidx[s]
    return out


cdef inline Py_ssize_t _rank(const long[::1] e, Py_ssize_t n, Py_ssize_t deg,
                             const long[:, ::1] binom):
    cdef Py_ssize_t r, rem, c
    if deg == 0:
        return 0
    r = binom[n + deg - 1, n]
    rem = deg
    for c in range(n - 1):
        r += binom[rem - e[c] + n - c - 2, n - c - 1]
        rem -= e[c]
    return r


def series_mul(const long[:, ::1] ea, const double[::1] ca,
               const long[:, ::1] eb, const double[::1] cb,
               Py_ssize_t order, const long[:, ::1] binom):
    """Dense graded-lex coefficient vector of the truncated product."""
    cdef Py_ssize_t ma = ea.shape[0], mb = eb.shape[0], n = ea.shape[1]
    cdef Py_ssize_t i, j, c, da, d
    cdef long[::1] tmp = np.empty(n if n > 0 else 1, dtype=np.int_)
    cdef long[::1] dega = np.empty(ma if ma > 0 else 1, dtype=np.int_)
    cdef long[::1] degb = np.empty(mb if mb > 0 else 1, dtype=np.int_)
    out = np.zeros(binom[n + order, n], dtype=np.float64)
    cdef double[::1] ov = out
    for i in range(ma):
        d = 0
        for c in range(n):
            d += ea[i, c]
        dega[i] = d
    for j in range(mb):
        d = 0
        for c in range(n):
            d += eb[j, c]
        degb[j] = d
    for i in range(ma):
        da = dega[i]
        for j in range(mb):
            d = da + degb[j]
            if d > order:
                continue
            for c in range(n):
                tmp[c] = ea[i, c] + eb[j, c]
            ov[_rank(tmp, n, d, binom)] += ca[i] * cb[j]
    return out
