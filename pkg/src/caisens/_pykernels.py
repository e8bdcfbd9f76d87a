"""Pure numpy implementations of the Monte Carlo kernels.

These mirror ``_ckernels.pyx`` operation for operation so that both backends
return bitwise-identical arrays for the same uniforms.
"""

from itertools import combinations

import numpy as np


def permuted_prefix_sums(q, u):
    """Prefix sums of ``q`` taken in Fisher-Yates order, one row per draw.

    ``u`` has shape (L, n); row ``l`` drives one shuffle. Column ``m`` of the
    result is the sum over a uniformly chosen size-``m`` subset.
    """
    q = np.ascontiguousarray(q, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    L, n = u.shape
    perm = np.tile(np.arange(n, dtype=np.int64), (L, 1))
    rows = np.arange(L)
    for k in range(n - 1):
        j = k + (u[:, k] * (n - k)).astype(np.int64)
        np.minimum(j, n - 1, out=j)
        a = perm[rows, k].copy()
        perm[rows, k] = perm[rows, j]
        perm[rows, j] = a
    out = np.zeros((L, n + 1))
    np.cumsum(q[perm], axis=1, out=out[:, 1:])
    return out


def subset_sums(q, m):
    """All C(n, m) subset sums of ``q`` in lexicographic subset order."""
    q = np.asarray(q, dtype=np.float64)
    n = q.shape[0]
    if m == 0:
        return np.zeros(1)
    idx = np.array(list(combinations(range(n), m)), dtype=np.int64)
    out = np.zeros(idx.shape[0])
    for c in range(m):
        out += q[idx[:, c]]
    return out


def draw_stratum(cdf, row_offsets, values, u_count, u_pick):
    """One stratum's statistic contribution per draw.

    The treated count is the inverse-CDF image of ``u_count``; the
    contribution is an equally likely entry of that count's table row.
    """
    n = cdf.shape[0] - 1
    m = np.searchsorted(cdf, u_count, side="right")
    np.minimum(m, n, out=m)
    start = row_offsets[m]
    size = row_offsets[m + 1] - start
    pick = (u_pick * size).astype(np.int64)
    np.minimum(pick, size - 1, out=pick)
    return values[start + pick]


def tail_counts(row_offsets, values, thresholds):
    """For every count m, the number of (draw, entry) pairs with entry >= threshold.

    Rows of ``values`` must be sorted ascending.
    """
    nrows = row_offsets.shape[0] - 1
    out = np.zeros(nrows, dtype=np.int64)
    for m in range(nrows):
        row = values[row_offsets[m]:row_offsets[m + 1]]
        below = np.searchsorted(row, thresholds, side="left")
        out[m] = row.shape[0] * thresholds.shape[0] - int(below.sum())
    return out
