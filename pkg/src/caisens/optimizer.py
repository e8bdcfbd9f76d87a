"""Moment-constrained linear programs over treated-count distributions.

The feasible set is every law on {0, ..., n} with mean ``mu`` and variance in
``[v_lo, v_hi]``. With the mean pinned, the variance band is a pair of linear
bounds on the second moment, so the problem is an LP with two equality rows
and two inequality rows.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from caisens.assignment import CountDistribution

FEAS_TOL = 1e-9
OPT_TOL = 1e-10
PIVOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MomentLP:
    objective: np.ndarray
    mean_target: float
    variance_interval: tuple
    direction: str = "maximize"

    def __post_init__(self):
        a = np.array(self.objective, dtype=np.float64)
        if a.ndim != 1 or a.size < 2 or not np.isfinite(a).all():
            raise ValueError("objective must be a finite vector of length n + 1 >= 2")
        if self.direction not in ("maximize", "minimize"):
            raise ValueError("direction must be 'maximize' or 'minimize'")
        object.__setattr__(self, "objective", a)
        object.__setattr__(self, "variance_interval", tuple(float(v) for v in self.variance_interval))

    @property
    def n(self):
        return self.objective.shape[0] - 1

    @classmethod
    def for_stratum(cls, objective, n, e, xi, direction="maximize"):
        """The LP of one coordinate-descent step: mean n*e, variance in
        [n e (1-e), min(xi n e (1-e), mu (n - mu))]."""
        mu = n * e
        v_b = n * e * (1.0 - e)
        return cls(objective, mu, (v_b, min(xi * v_b, mu * (n - mu))), direction)


@dataclass(frozen=True, eq=False)
class LPSolution:
    status: str  # "optimal" | "infeasible"
    dist: CountDistribution = None
    objective_value: float = float("nan")
    active_constraints: tuple = field(default=())
    iterations: int = 0


def _sign(problem):
    return 1.0 if problem.direction == "maximize" else -1.0


def _trivially_infeasible(problem):
    mu = problem.mean_target
    v_lo, v_hi = problem.variance_interval
    n = problem.n
    if not (-FEAS_TOL <= mu <= n + FEAS_TOL) or v_lo > v_hi + FEAS_TOL or v_lo > mu * (n - mu) + FEAS_TOL:
        return True
    # a single unit's count is Bernoulli, so its variance is pinned
    return n == 1 and v_hi < mu * (1.0 - mu) - FEAS_TOL


def _finish(problem, pi, iterations=0):
    dist = CountDistribution.from_weights(pi)
    m = np.arange(problem.n + 1, dtype=np.float64)
    mean = float(dist.probs @ m)
    var = float(dist.probs @ (m - mean) ** 2)
    v_lo, v_hi = problem.variance_interval
    scale = max(1.0, problem.n ** 2)
    active = ["mean"]
    if problem.n > 1:
        if abs(var - v_lo) <= 1e-7 * scale:
            active.append("var-lo")
        if abs(var - v_hi) <= 1e-7 * scale:
            active.append("var-hi")
    return LPSolution("optimal", dist, float(problem.objective @ dist.probs), tuple(active), iterations)


def _two_point(problem):
    mu = min(max(problem.mean_target, 0.0), 1.0)
    return _finish(problem, [1.0 - mu, mu])


def _revised_simplex(c, A, b, basis, allowed, max_iter):
    """Minimise c.x s.t. A x = b, x >= 0 from a feasible basis, Bland's rule."""
    m = A.shape[0]
    it = 0
    while it < max_iter:
        AB = A[:, basis]
        xB = np.linalg.solve(AB, b)
        y = np.linalg.solve(AB.T, c[basis])
        reduced = c - y @ A
        reduced[basis] = 0.0
        entering = -1
        for j in allowed:
            if reduced[j] < -OPT_TOL:
                entering = j
                break
        if entering < 0:
            return basis, xB, it
        w = np.linalg.solve(AB, A[:, entering])
        best, leave = np.inf, -1
        for i in range(m):
            if w[i] > PIVOT_TOL:
                r = max(xB[i], 0.0) / w[i]
                if r < best - 1e-15 or (abs(r - best) <= 1e-15 and basis[i] < basis[leave]):
                    best, leave = r, i
        if leave < 0:
            raise RuntimeError("unbounded LP; the moment polytope should be bounded")
        basis[leave] = entering
        it += 1
    raise RuntimeError("simplex iteration limit reached")


def solve_moment_lp(problem, max_iter=10000):
    """Optimise ``objective . pi`` over the moment polytope.

    Dense revised simplex with Bland's anti-cycling rule and a phase-I
    artificial start. Infeasibility is reported through ``status``.
    """
    n = problem.n
    if _trivially_infeasible(problem):
        return LPSolution("infeasible")
    if n == 1:
        return _two_point(problem)
    mu = problem.mean_target
    v_lo, v_hi = problem.variance_interval
    grid = np.arange(n + 1, dtype=np.float64) / n
    npi = n + 1
    # columns: pi_0..pi_n, surplus (var-lo), slack (var-hi), 4 artificials
    A = np.zeros((4, npi + 2 + 4))
    A[0, :npi] = 1.0
    A[1, :npi] = grid
    A[2, :npi] = grid ** 2
    A[3, :npi] = grid ** 2
    A[2, npi] = -1.0
    A[3, npi + 1] = 1.0
    A[:, npi + 2:] = np.eye(4)
    b = np.array([1.0, mu / n, (mu * mu + v_lo) / n ** 2, (mu * mu + v_hi) / n ** 2])
    art = list(range(npi + 2, npi + 6))
    real = list(range(npi + 2))

    c1 = np.zeros(A.shape[1])
    c1[art] = 1.0
    basis, xB, it1 = _revised_simplex(c1, A, b, list(art), real, max_iter)
    if float(c1[basis] @ xB) > FEAS_TOL:
        return LPSolution("infeasible", iterations=it1)

    # Drive zero-level artificials out of the basis; drop rows that cannot be.
    rows = list(range(4))
    while True:
        pos = [k for k, j in enumerate(basis) if j in art]
        if not pos:
            break
        k = pos[0]
        cand = [j for j in real if j not in basis]
        tab = np.linalg.solve(A[np.ix_(rows, basis)], A[np.ix_(rows, cand)])
        pivots = [j for j, v in zip(cand, tab[k]) if abs(v) > 1e-9]
        if pivots:
            basis[k] = pivots[0]
        else:
            del rows[k]
            del basis[k]
    A2, b2 = A[np.ix_(rows, real)], b[rows]

    c2 = np.zeros(npi + 2)
    c2[:npi] = -_sign(problem) * problem.objective
    basis, xB, it2 = _revised_simplex(c2, A2, b2, basis, real, max_iter)
    x = np.zeros(npi + 2)
    x[basis] = xB
    return _finish(problem, x[:npi], it1 + it2)


def polytope_vertices(n, mu, v_lo, v_hi, tol=FEAS_TOL):
    """All vertices of the moment polytope, by support enumeration.

    Vertices have support of size 1, 2 (mean and mass pin the weights), or 3
    (second moment on one side of the band). Duplicates are possible.
    """
    if n == 1:
        if -tol <= mu <= 1 + tol and v_lo <= mu * (1 - mu) + tol <= v_hi + 2 * tol:
            m = min(max(mu, 0.0), 1.0)
            return np.array([[1.0 - m, m]])
        return np.zeros((0, 2))
    if mu < -tol or mu > n + tol or v_lo > v_hi + tol:
        return np.zeros((0, n + 1))
    out = []
    pts = np.arange(n + 1, dtype=np.float64)
    scale = max(1.0, n * n)
    # single point
    j = int(round(mu))
    if abs(j - mu) <= tol and v_lo <= tol * scale:
        v = np.zeros(n + 1)
        v[j] = 1.0
        out.append(v)
    # two points j < k bracketing mu
    J, K = np.triu_indices(n + 1, k=1)
    w = (mu - J) / (K - J)
    var = (mu - J) * (K - mu)
    ok = (w >= -tol) & (w <= 1 + tol) & (var >= v_lo - tol * scale) & (var <= v_hi + tol * scale)
    for j, k, wk in zip(J[ok], K[ok], w[ok]):
        v = np.zeros(n + 1)
        v[j] += 1.0 - wk
        v[k] += wk
        out.append(v)
    # three points with the second moment at a band edge
    trip = np.array(list(combinations(range(n + 1), 3)), dtype=np.int64)
    if trip.size:
        x = pts[trip]
        M = np.stack([np.ones_like(x), x, x * x], axis=1)
        for edge in {v_lo, v_hi}:
            rhs = np.array([1.0, mu, mu * mu + edge])
            sol = np.linalg.solve(M, np.broadcast_to(rhs, (trip.shape[0], 3))[..., None])[..., 0]
            good = (sol >= -tol).all(axis=1)
            for t, p in zip(trip[good], sol[good]):
                v = np.zeros(n + 1)
                v[t] = p
                out.append(v)
    if not out:
        return np.zeros((0, n + 1))
    return np.clip(np.array(out), 0.0, None)


def vertex_oracle(problem):
    """Brute-force LP solution by scoring every polytope vertex (n <= 30)."""
    n = problem.n
    if n > 30:
        raise ValueError("vertex_oracle is limited to n <= 30")
    if _trivially_infeasible(problem):
        return LPSolution("infeasible")
    V = polytope_vertices(n, problem.mean_target, *problem.variance_interval)
    if V.shape[0] == 0:
        return LPSolution("infeasible")
    scores = V @ problem.objective
    k = int(np.argmax(_sign(problem) * scores))
    return _finish(problem, V[k])
