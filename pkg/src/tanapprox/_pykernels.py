"""Pure numpy implementations of the hot loops (fallback for ``_ckernels``)."""

import numpy as np

_CHUNK = 1 << 20  # max pairwise entries held in memory at once


def _row_chunks(na, nb, n):
    step = max(1, _CHUNK // max(1, na * n))
    for start in range(0, nb, step):
        yield slice(start, min(nb, start + step))


def _sqdist(A, Bc):
    diff = Bc[:, None, :] - A[None, :, :]
    return np.sum(diff * diff, axis=-1)


def nearest(A, B):
    na, n = A.shape
    nb = B.shape[0]
    dist = np.empty(nb)
    idx = np.empty(nb, dtype=np.intp)
    if na == 0:
        dist[:] = np.inf
        idx[:] = -1
        return dist, idx
    for sl in _row_chunks(na, nb, n):
        d2 = _sqdist(A, B[sl])
        j = np.argmin(d2, axis=1)
        idx[sl] = j
        dist[sl] = np.sqrt(d2[np.arange(d2.shape[0]), j])
    return dist, idx


def knn(A, B, m):
    na, n = A.shape
    nb = B.shape[0]
    m = min(m, na)
    out = np.empty((nb, m), dtype=np.intp)
    for sl in _row_chunks(na, nb, n):
        d2 = _sqdist(A, B[sl])
        out[sl] = np.argsort(d2, axis=1, kind="stable")[:, :m]
    return out


def _ranks(E, deg, binom):
    n = E.shape[1]
    r = binom[n + deg - 1, n]
    r = np.where(deg == 0, 0, r)
    rem = deg.copy()
    for c in range(n - 1):
        r = r + binom[rem - E[:, c] + n - c - 2, n - c - 1]
        rem = rem - E[:, c]
    return r


def series_mul(ea, ca, eb, cb, order, binom):
    n = ea.shape[1]
    size = int(binom[n + order, n])
    if ea.shape[0] == 0 or eb.shape[0] == 0:
        return np.zeros(size)
    E = (ea[:, None, :] + eb[None, :, :]).reshape(-1, n)
    w = (ca[:, None] * cb[None, :]).reshape(-1)
    deg = E.sum(axis=1)
    keep = deg <= order
    E, w, deg = E[keep], w[keep], deg[keep]
    if w.size == 0:
        return np.zeros(size)
    return np.bincount(_ranks(E, deg, binom), weights=w, minlength=size).astype(np.float64)
