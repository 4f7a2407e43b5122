# cython: language_level=3
"""Compiled booster kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, NAN

cnp.import_array()


cdef inline Py_ssize_t _ordinal(Py_ssize_t i, Py_ssize_t nb, Py_ssize_t m) noexcept nogil:
    # must agree with _pykernels.candidate_ordinals
    if m == 1:
        return nb // 2
    return (2 * i * (nb - 1) + (m - 1)) // (2 * (m - 1))


def best_split_sorted(const double[::1] xs, const double[::1] rs,
                      Py_ssize_t min_leaf, Py_ssize_t max_candidates):
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, p, nb = 0, b = 0, pick = 0, target = 0, bestpos = -1
    cdef double total = 0.0, run = 0.0, sl, sr, nl, nr, sc, best = -INFINITY
    cdef double lo, hi, thr
    cdef bint capped, take
    if n < 2 or n < 2 * min_leaf:
        return -INFINITY, NAN
    with nogil:
        for i in range(n):
            total += rs[i]
        for i in range(1, n):
            if xs[i] > xs[i - 1]:
                nb += 1
    if nb == 0:
        return -INFINITY, NAN
    capped = nb > max_candidates
    if capped:
        target = _ordinal(0, nb, max_candidates)
    with nogil:
        for p in range(1, n):
            run += rs[p - 1]
            if xs[p] > xs[p - 1]:
                take = True
                if capped:
                    if b == target and pick < max_candidates:
                        pick += 1
                        if pick < max_candidates:
                            target = _ordinal(pick, nb, max_candidates)
                    else:
                        take = False
                b += 1
                if take and p >= min_leaf and n - p >= min_leaf:
                    sl = run
                    sr = total - sl
                    nl = <double>p
                    nr = <double>(n - p)
                    sc = sl * sl / nl + sr * sr / nr
                    if sc > best:
                        best = sc
                        bestpos = p
    if bestpos < 0:
        return -INFINITY, NAN
    lo = xs[bestpos - 1]
    hi = xs[bestpos]
    thr = 0.5 * (lo + hi)
    if not thr < hi:
        thr = lo
    return best, thr


def predict_tree(const double[:, :] x, const cnp.int64_t[::1] feature,
                 const double[::1] threshold, const cnp.int64_t[::1] left,
                 const cnp.int64_t[::1] right, const double[::1] value):
    cdef Py_ssize_t n = x.shape[0], i
    cdef cnp.int64_t node, f
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            node = 0
            f = feature[node]
            while f >= 0:
                if x[i, f] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
                f = feature[node]
            o[i] = value[node]
    return out
