"""Two-stage stratified assignment: treated-count laws, moments, sampling and
the per-count conditional distributions of a stratum's rank-sum contribution."""

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.stats import binom

from caisens import kernels

EXHAUSTIVE_CAP = 5000


@dataclass(frozen=True, eq=False)
class CountDistribution:
    """Law of the treated count M on {0, ..., n}."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a nonempty vector")
        if (p < 0).any() or not np.isfinite(p).all():
            raise ValueError("probs must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probs sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n(self):
        return self.probs.shape[0] - 1

    @classmethod
    def from_weights(cls, w):
        """Clip tiny negatives from a numerical solve and renormalise."""
        w = np.clip(np.asarray(w, dtype=np.float64), 0.0, None)
        return cls(w / w.sum())

    def cdf(self):
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def __eq__(self, other):
        return isinstance(other, CountDistribution) and np.array_equal(self.probs, other.probs)

    def __repr__(self):
        return f"CountDistribution({np.array2string(self.probs, precision=4)})"


def binomial_count_dist(n, e):
    if not 0.0 <= e <= 1.0:
        raise ValueError("e must lie in [0, 1]")
    return CountDistribution.from_weights(binom.pmf(np.arange(n + 1), n, e))


def dist_moments(dist):
    m = np.arange(dist.n + 1, dtype=np.float64)
    mean = float(dist.probs @ m)
    var = float(dist.probs @ (m - mean) ** 2)
    return mean, var


def pair_covariance(dist):
    """Cov(D_i, D_j), i != j, for two units of a stratum under the two-stage design."""
    n = dist.n
    if n < 2:
        raise ValueError("pair covariance needs n >= 2")
    m = np.arange(n + 1, dtype=np.float64)
    ef = float(dist.probs @ (m * (m - 1)))
    mean = float(dist.probs @ m)
    return ef / (n * (n - 1)) - (mean / n) ** 2


def assignment_probability(dist, d):
    d = np.asarray(d)
    if d.shape != (dist.n,) or not np.isin(d, (0, 1)).all():
        raise ValueError("d must be a binary vector of length n")
    m = int(d.sum())
    return float(dist.probs[m]) / comb(dist.n, m)


class MechanismSet(tuple):
    """One :class:`CountDistribution` per stratum, in stratum order."""

    def __new__(cls, dists):
        return super().__new__(cls, dists)

    @classmethod
    def binomial(cls, strata):
        return cls(
            binomial_count_dist(int(n), float(e))
            for n, e in zip(strata.stratum_sizes, strata.treated_shares)
        )

    def check(self, strata):
        if len(self) != strata.effective_K:
            raise ValueError("one distribution per stratum required")
        for s, (dist, n) in enumerate(zip(self, strata.stratum_sizes)):
            if dist.n != n:
                raise ValueError(f"stratum {s}: distribution has n={dist.n}, stratum has {n}")


def _partial_shuffle(rng, n, m):
    idx = np.arange(n)
    for k in range(m):
        j = k + int(rng.integers(n - k))
        idx[k], idx[j] = idx[j], idx[k]
    return idx[:m]


def sample_assignment(mechanisms, strata, rng):
    """Draw a full assignment vector: M_s from pi_s, then a uniform size-M_s subset."""
    mechanisms.check(strata)
    d = np.zeros(strata.labels.shape[0], dtype=np.int8)
    for dist, idx in zip(mechanisms, strata.members):
        m = int(np.searchsorted(dist.cdf(), rng.random(), side="right"))
        m = min(m, dist.n)
        d[idx[_partial_shuffle(rng, idx.shape[0], m)]] = 1
    return d


def sample_assignments(mechanisms, strata, rng, size, chunk=100000):
    """``size`` independent assignment vectors as a (size, N) int8 array.

    Vectorised version of :func:`sample_assignment`: the subset of size M_s
    is the M_s units with the smallest iid uniform keys, which is uniform
    over subsets.
    """
    mechanisms.check(strata)
    out = np.zeros((size, strata.labels.shape[0]), dtype=np.int8)
    for start in range(0, size, chunk):
        b = min(chunk, size - start)
        for dist, idx in zip(mechanisms, strata.members):
            m = np.minimum(np.searchsorted(dist.cdf(), rng.random(b), side="right"), dist.n)
            ranks = np.argsort(np.argsort(rng.random((b, idx.shape[0])), axis=1), axis=1)
            out[start:start + b, idx] = ranks < m[:, None]
    return out


@dataclass(frozen=True, eq=False)
class ConditionalTable:
    """Conditional law of one stratum's statistic contribution given M = m.

    Row ``m`` is ``values[row_offsets[m]:row_offsets[m+1]]``, sorted, and every
    entry carries equal weight. Exact rows hold all C(n, m) subset sums;
    sampled rows hold L draws.
    """

    n: int
    row_offsets: np.ndarray
    values: np.ndarray
    exact: np.ndarray

    def row(self, m):
        return self.values[self.row_offsets[m]:self.row_offsets[m + 1]]

    @property
    def mode(self):
        if self.exact.all():
            return "exact"
        return "sampled" if not self.exact.any() else "mixed"

    def tail_probability(self, m, threshold):
        """Pr(T_s >= threshold | M_s = m) under this table."""
        row = self.row(m)
        return 1.0 - np.searchsorted(row, threshold, side="left") / row.shape[0]


def precompute_conditional_stats(q, L, rng, exhaustive_cap=EXHAUSTIVE_CAP):
    """Build the :class:`ConditionalTable` for within-stratum ranks ``q``.

    Counts with at most ``exhaustive_cap`` subsets are enumerated; the rest get
    ``L`` sampled subset sums. Sampled rows for all counts come from the same
    ``L`` shuffles (prefix sums), which is harmless because each row is only
    ever used marginally.
    """
    if L < 1:
        raise ValueError("L must be positive")
    q = np.asarray(q, dtype=np.float64)
    n = q.shape[0]
    exact = np.array([comb(n, m) <= exhaustive_cap for m in range(n + 1)])
    prefix = None
    if not exact.all():
        prefix = kernels.permuted_prefix_sums(q, rng.random((L, n)))
    rows = []
    for m in range(n + 1):
        row = kernels.subset_sums(q, m) if exact[m] else prefix[:, m].copy()
        row.sort()
        rows.append(row)
    offsets = np.zeros(n + 2, dtype=np.int64)
    offsets[1:] = np.cumsum([r.shape[0] for r in rows])
    return ConditionalTable(n, offsets, np.concatenate(rows), exact)


def draw_statistic(tables, mechanisms, u):
    """Total statistic per draw given uniforms ``u`` of shape (2, K, B).

    ``u[0]`` picks each stratum's treated count, ``u[1]`` its table entry.
    Strata are summed in index order.
    """
    total = np.zeros(u.shape[2])
    for s, (table, dist) in enumerate(zip(tables, mechanisms)):
        total += kernels.draw_stratum(dist.cdf(), table.row_offsets, table.values, u[0, s], u[1, s])
    return total
