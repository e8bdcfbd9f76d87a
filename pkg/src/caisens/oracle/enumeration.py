"""Exact bias decomposition of the covariate-adjusted mean contrast under
interference, by summation over every assignment vector.

A population is N units with discrete covariates, a table of mean potential
outcomes Y_i(d, d_{-i}) and a law over {0,1}^N. The functional is evaluated
for a focal unit drawn uniformly within each covariate cell, independently of
the assignment; "the others' assignment" is then the pair (focal unit,
D_{-I}). Assignment vectors are bit codes with unit i on bit i.
"""

from dataclasses import dataclass

import numpy as np

MAX_UNITS = 14


class OverlapError(ValueError):
    pass


def _bits(N):
    codes = np.arange(2 ** N, dtype=np.int64)
    return ((codes[:, None] >> np.arange(N)) & 1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    """Finite population for enumeration.

    ``y1[i, a]`` and ``y0[i, a]`` are Y_i(1, a_{-i}) and Y_i(0, a_{-i}) for
    assignment code ``a`` (bit i of ``a`` is ignored). ``law[a]`` is the
    probability of assignment ``a``.
    """

    covariate_values: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    law: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.covariate_values)
        N = w.shape[0]
        if not 1 <= N <= MAX_UNITS:
            raise ValueError(f"enumeration needs 1 <= N <= {MAX_UNITS}")
        law = np.asarray(self.law, dtype=np.float64)
        if law.shape != (2 ** N,) or (law < 0).any() or abs(law.sum() - 1.0) > 1e-12:
            raise ValueError("law must be a probability vector over 2^N assignments")
        for name in ("y1", "y0"):
            if np.asarray(getattr(self, name)).shape != (N, 2 ** N):
                raise ValueError(f"{name} must have shape (N, 2^N)")
        object.__setattr__(self, "law", law)

    @property
    def N(self):
        return len(self.covariate_values)

    @classmethod
    def from_function(cls, covariate_values, outcome_mean_fn, law):
        """Tabulate ``outcome_mean_fn(i, d_i, d, w)`` where ``d`` is the full
        assignment vector with entry i set to ``d_i``."""
        w = np.asarray(covariate_values)
        N = w.shape[0]
        bits = _bits(N)
        y = np.zeros((2, N, 2 ** N))
        for a, vec in enumerate(bits):
            for i in range(N):
                for di in (0, 1):
                    v = vec.copy()
                    v[i] = di
                    y[di, i, a] = outcome_mean_fn(i, di, v, w[i])
        return cls(w, y[1], y[0], law)


def product_law(covariate_values, prob_by_value):
    """Independent assignments with Pr(D_i = 1) = prob_by_value[W_i]."""
    w = np.asarray(covariate_values)
    p = np.array([prob_by_value[v] for v in w], dtype=np.float64)
    bits = _bits(w.shape[0])
    return np.prod(np.where(bits == 1, p, 1.0 - p), axis=1)


@dataclass(frozen=True)
class Decomposition:
    phi_itr: float
    ade: float
    b_ade: float
    b_ade_1: float
    b_ade_0: float
    ade_treated: float  # E[E[Delta | D=1, W]]
    ade_control: float  # E[E[Delta | D=0, W]]

    def route_residuals(self):
        """How far each of the three identities is from holding."""
        return (
            self.phi_itr - (self.ade_treated + self.b_ade_1),
            self.phi_itr - (self.ade_control + self.b_ade_0),
            self.phi_itr - (self.ade + self.b_ade),
        )


def phi_itr_enumerate(pop):
    """Mean contrast, ADE and the three bias terms by exact summation.

    The bias terms are computed from their own sums (conditional assignment
    laws of the others given the focal unit's treatment), not as differences
    of the other quantities, so the identities are genuine checks.
    """
    N = pop.N
    bits = _bits(N).T.astype(np.float64)  # (N, 2^N)
    P = pop.law
    w = np.asarray(pop.covariate_values)
    y1, y0 = np.asarray(pop.y1, float), np.asarray(pop.y0, float)
    delta = y1 - y0
    treated = bits * P  # joint weight of (i, a) with a_i = 1
    control = (1.0 - bits) * P
    # weight of (i, a_{-i}) regardless of own treatment, stored at both codes
    flip = np.arange(2 ** N)[None, :] ^ (1 << np.arange(N))[:, None]
    marginal = 0.5 * (P[None, :] + P[flip])

    phi = ade = b = b1 = b0 = adt1 = adt0 = 0.0
    for v in np.unique(w):
        g = w == v
        weight = g.mean()
        den1, den0 = treated[g].sum(), control[g].sum()
        if den1 <= 0 or den0 <= 0:
            raise OverlapError(f"covariate cell {v!r} lacks treated or control support")
        p1 = treated[g] / den1  # P(x; 1, w)
        p0 = control[g] / den0  # P(x; 0, w)
        pw = marginal[g] / g.sum()  # P(x; w)
        mu1 = float((y1[g] * p1).sum())
        mu0 = float((y0[g] * p0).sum())
        phi += weight * (mu1 - mu0)
        ade += weight * float((delta[g] * pw).sum())
        adt1 += weight * float((delta[g] * p1).sum())
        adt0 += weight * float((delta[g] * p0).sum())
        b1 += weight * float((y0[g] * (p1 - p0)).sum())
        b0 += weight * float((y1[g] * (p1 - p0)).sum())
        # reference realisation x' = (first unit of the cell, all others control)
        i_ref = int(np.flatnonzero(g)[0])
        r1, r0 = y1[i_ref, 0], y0[i_ref, 0]
        b += weight * (
            float(((y1[g] - r1) * (p1 - pw)).sum()) - float(((y0[g] - r0) * (p0 - pw)).sum())
        )
    return Decomposition(phi, ade, b, b1, b0, adt1, adt0)


def random_population(rng, N, n_values=2, cai=False, interference=1.0):
    """A random population for property checks.

    With ``cai=True`` the law is a product of Bernoullis whose probability
    depends only on the covariate value; otherwise a random mixture of such a
    product law with a random joint law.
    """
    w = rng.integers(n_values, size=N)
    # make sure every covariate cell exists twice so overlap is attainable
    w[: 2 * n_values] = np.repeat(np.arange(n_values), 2)[:N]
    bits = _bits(N).astype(np.float64)
    base = rng.normal(size=N)
    direct = rng.normal(size=N)
    slope = interference * rng.normal(size=(N, N))
    np.fill_diagonal(slope, 0.0)
    spill = bits @ slope.T  # (2^N, N), own bit has zero weight
    y0 = (base[None, :] + spill).T
    y1 = (base[None, :] + direct[None, :] + spill * (1.0 + 0.5 * rng.random())).T
    probs = {v: rng.uniform(0.2, 0.8) for v in range(n_values)}
    law = product_law(w, probs)
    if not cai:
        other = rng.random(2 ** N) ** 3
        other /= other.sum()
        mix = rng.uniform(0.2, 0.9)
        law = (1 - mix) * law + mix * other
    law = law / law.sum()
    return PopulationSpec(w, y1, y0, law)
