"""Kernel dispatch: compiled core when built, numpy fallback otherwise.

Set ``TANAPPROX_PURE=1`` to force the fallback (used by the benchmark and
the backend-agreement tests).
"""

import os
from functools import lru_cache
from math import comb

import numpy as np

from . import _pykernels

_ck = None
if os.environ.get("TANAPPROX_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _ck
    except ImportError:  # extension not built
        _ck = None

BACKEND = "cython" if _ck is not None else "python"
_impl = _ck if _ck is not None else _pykernels


def _points(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    return a


@lru_cache(maxsize=None)
def binomial_table(size):
    t = np.zeros((size + 1, size + 1), dtype=np.int_)
    for a in range(size + 1):
        for b in range(a + 1):
            t[a, b] = comb(a, b)
    return t


def nearest(A, B, impl=None):
    """Distance and index of the nearest point of ``A`` for every point of ``B``."""
    A, B = _points(A), _points(B)
    if A.shape[0] == 0:
        raise ValueError("nearest: empty reference cloud")
    return (impl or _impl).nearest(A, B)


def knn(A, B, m, impl=None):
    A, B = _points(A), _points(B)
    if A.shape[0] == 0:
        raise ValueError("knn: empty reference cloud")
    return (impl or _impl).knn(A, B, int(m))


def series_mul(ea, ca, eb, cb, order, impl=None):
    """Truncated product of two sparse series, returned densely in graded-lex rank order."""
    ea = np.ascontiguousarray(ea, dtype=np.int_)
    eb = np.ascontiguousarray(eb, dtype=np.int_)
    n = ea.shape[1]
    binom = binomial_table(n + order + 1)
    return (impl or _impl).series_mul(
        ea,
        np.ascontiguousarray(ca, dtype=np.float64),
        eb,
        np.ascontiguousarray(cb, dtype=np.float64),
        int(order),
        binom,
    )
