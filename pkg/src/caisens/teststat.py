"""Within-stratum ranks and the stratified Wilcoxon rank-sum statistic."""

import numpy as np
from scipy.stats import rankdata


def within_stratum_ranks(outcomes, strata):
    """Average ranks of the outcomes, restarting at 1 in every stratum.

    Ties are exact float equality.
    """
    y = np.asarray(outcomes, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("outcomes must be finite")
    q = np.empty_like(y)
    for idx in strata.members:
        q[idx] = rankdata(y[idx], method="average")
    return q


def stratified_rank_sum(ranks, treatments, strata=None):
    """T = sum over strata of the treated units' within-stratum ranks."""
    q = np.asarray(ranks, dtype=np.float64)
    d = np.asarray(treatments, dtype=np.float64)
    if q.shape != d.shape:
        raise ValueError("ranks and treatments are not conformable")
    if strata is not None and strata.labels.shape != q.shape:
        raise ValueError("strata do not match ranks")
    return float(np.sum(q * d))


def rank_sum_bounds(strata, treated_counts=None):
    """Smallest and largest T attainable with ``treated_counts`` per stratum."""
    n = strata.stratum_sizes
    m = strata.treated_counts if treated_counts is None else np.asarray(treated_counts)
    lo = float(np.sum(m * (m + 1) / 2.0))
    hi = float(np.sum(m * (2 * n - m + 1) / 2.0))
    return lo, hi
