"""Exact extremal tail probabilities of the stratified rank-sum statistic.

The tail probability is multilinear in the per-stratum count laws, so its
extremes over a product of moment polytopes are attained at a combination of
polytope vertices. Every combination is scored exactly by convolving the
strata's statistic distributions on the half-integer grid.
"""

from itertools import combinations

import numpy as np

from caisens.assignment import binomial_count_dist
from caisens.optimizer import polytope_vertices

MAX_TOTAL_UNITS = 12


def _conditional_pmfs(q2, n):
    """pmf of twice the subset sum for each count m, on the grid 0..sum(q2)."""
    size = int(q2.sum()) + 1
    out = np.zeros((n + 1, size))
    for m in range(n + 1):
        for c in combinations(range(n), m):
            out[m, int(q2[list(c)].sum())] += 1.0
        out[m] /= out[m].sum()
    return out


def _stratum_pmfs(q, laws):
    q2 = np.rint(2.0 * np.asarray(q)).astype(np.int64)
    if not np.allclose(q2, 2.0 * np.asarray(q)):
        raise ValueError("ranks must be multiples of 1/2")
    cond = _conditional_pmfs(q2, q2.shape[0])
    return laws @ cond


def _combine(joint, pmfs):
    """Convolve every joint row with every stratum row."""
    C, G = joint.shape
    V, g = pmfs.shape
    out = np.zeros((C, V, G + g - 1))
    for t in range(g):
        out[:, :, t:t + G] += joint[:, None, :] * pmfs[None, :, t:t + 1]
    return out.reshape(C * V, G + g - 1)


def _unique_rows(V):
    _, idx = np.unique(np.round(V, 12), axis=0, return_index=True)
    return V[np.sort(idx)]


def exact_tail_probability(problem, laws, tail="right"):
    """Exact Pr(T >= T_obs) (or <= for the left tail) under given count laws."""
    joint = np.ones((1, 1))
    for q, law in zip(problem._q, laws):
        joint = _combine(joint, _stratum_pmfs(q, np.asarray(law.probs)[None, :]))
    t2 = int(round(2.0 * problem.T_obs))
    return float(joint[0, t2:].sum() if tail == "right" else joint[0, : t2 + 1].sum())


def exact_pvalue_bounds(problem, xi, tail="right"):
    """Exact lower and upper tail probabilities over the admissible laws.

    At ``xi == 1`` the admissible mechanism is the stratified Bernoulli one.
    Returns ``{"lower": float, "upper": float, "lower_laws": [...],
    "upper_laws": [...]}`` with laws as probability vectors per stratum.
    """
    if sum(problem.sizes) > MAX_TOTAL_UNITS:
        raise ValueError(f"exact bounds need at most {MAX_TOTAL_UNITS} units in the included strata")
    if xi < 1.0:
        raise ValueError("xi must be at least 1")
    vertex_sets = []
    for n, e in zip(problem.sizes, problem.shares):
        if xi == 1.0 or n == 1:
            V = binomial_count_dist(n, e).probs[None, :]
        else:
            mu, v_b = n * e, n * e * (1.0 - e)
            V = _unique_rows(polytope_vertices(n, mu, v_b, min(xi * v_b, mu * (n - mu))))
            if V.shape[0] == 0:
                raise ValueError(f"empty admissible set in stratum of size {n}")
        vertex_sets.append(V)
    joint = np.ones((1, 1))
    for q, V in zip(problem._q, vertex_sets):
        joint = _combine(joint, _stratum_pmfs(q, V))
    t2 = int(round(2.0 * problem.T_obs))
    tails = joint[:, t2:].sum(axis=1) if tail == "right" else joint[:, : t2 + 1].sum(axis=1)
    shape = [V.shape[0] for V in vertex_sets]

    def laws(k):
        return [V[i] for V, i in zip(vertex_sets, np.unravel_index(k, shape))]

    hi, lo = int(np.argmax(tails)), int(np.argmin(tails))
    return {
        "lower": float(tails[lo]),
        "upper": float(tails[hi]),
        "lower_laws": laws(lo),
        "upper_laws": laws(hi),
    }
