"""Reference numpy implementations of the booster kernels."""

import numpy as np


def candidate_ordinals(n_boundaries: int, max_candidates: int) -> np.ndarray:
    """Evenly spaced boundary ordinals, rounded half up in integer arithmetic."""
    if n_boundaries <= max_candidates:
        return np.arange(n_boundaries)
    if max_candidates == 1:
        return np.array([n_boundaries // 2])
    i = np.arange(max_candidates, dtype=np.int64)
    m = max_candidates - 1
    return (2 * i * (n_boundaries - 1) + m) // (2 * m)


def best_split_sorted(xs, rs, min_leaf, max_candidates):
    """Best variance-reduction split of one feature within one node.

    ``xs`` holds the node's feature values sorted ascending and ``rs`` the
    residuals in the same order. Candidate cuts sit between consecutive
    distinct values; when there are more than ``max_candidates`` of them an
    evenly spaced subset is kept. Returns ``(score, threshold)`` where
    ``score = S_l^2 / n_l + S_r^2 / n_r``, or ``(-inf, nan)`` if no cut
    leaves ``min_leaf`` rows on both sides. Ties go to the lowest threshold.
    """
    n = xs.shape[0]
    if n < 2 or n < 2 * min_leaf:
        return -np.inf, np.nan
    csum = np.cumsum(rs)
    total = csum[-1]
    bnd = np.flatnonzero(xs[1:] > xs[:-1]) + 1
    if bnd.size == 0:
        return -np.inf, np.nan
    bnd = bnd[candidate_ordinals(bnd.size, max_candidates)]
    bnd = bnd[(bnd >= min_leaf) & (n - bnd >= min_leaf)]
    if bnd.size == 0:
        return -np.inf, np.nan
    sl = csum[bnd - 1]
    sr = total - sl
    nl = bnd.astype(np.float64)
    nr = (n - bnd).astype(np.float64)
    score = sl * sl / nl + sr * sr / nr
    k = int(np.argmax(score))
    p = bnd[k]
    lo, hi = xs[p - 1], xs[p]
    thr = 0.5 * (lo + hi)
    if not thr < hi:
        thr = lo
    return float(score[k]), float(thr)


def predict_tree(x, feature, threshold, left, right, value):
    """Leaf value reached by each row of ``x``; ``feature[k] < 0`` marks a leaf."""
    node = np.zeros(x.shape[0], dtype=np.int64)
    rows = np.arange(x.shape[0])
    while True:
        f = feature[node]
        active = f >= 0
        if not active.any():
            break
        r = rows[active]
        nd = node[active]
        go_left = x[r, f[active]] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
    return value[node]
