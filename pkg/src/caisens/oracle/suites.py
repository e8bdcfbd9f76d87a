"""Self-contained verification suites run by ``caisens verify``.

Each suite draws random instances from its own stream, checks an identity
against an independent computation and returns a :class:`SuiteResult`.
``fault=True`` flips a sign in the checked quantity; the suite must then
fail, which exercises the reporting path.
"""

from dataclasses import dataclass
from itertools import product
import time

import numpy as np

from caisens import rng as streams
from caisens.assignment import CountDistribution, assignment_probability, dist_moments, pair_covariance
from caisens.optimizer import MomentLP, solve_moment_lp, vertex_oracle
from caisens.oracle.enumeration import phi_itr_enumerate, random_population
from caisens.oracle.exact_bounds import exact_pvalue_bounds
from caisens.propensity import StratifiedSample
from caisens.sensitivity import RandomizationProblem, SensitivityConfig, optimize_bounds
from caisens.teststat import within_stratum_ranks

SUITES = ("prop1", "theorem1", "lp", "exact-mc")
DEFAULT_TRIALS = {"prop1": 100, "theorem1": 50, "lp": 200, "exact-mc": 3}


@dataclass
class SuiteResult:
    name: str
    passed: bool
    trials: int
    max_error: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.trials} trials, max error {self.max_error:.3g} "
                f"(tolerance {self.tolerance:g}) in {self.seconds:.2f}s{' - ' + self.detail if self.detail else ''}")


def random_count_distribution(g, n):
    """Random pmf over 0..n with varied sparsity."""
    w = g.random(n + 1) ** g.uniform(0.5, 4.0)
    w[g.random(n + 1) < 0.2] = 0.0
    if w.sum() == 0:
        w[g.integers(n + 1)] = 1.0
    return CountDistribution.from_weights(w)


def check_prop1(trials=100, seed=0, fault=False):
    """Pair covariance against the variance identity and, for n <= 6, against
    direct enumeration of all 2^n assignment vectors."""
    g = streams.stream(seed, 0xC0)
    worst = 0.0
    sign = -1.0 if fault else 1.0
    for _ in range(trials):
        n = int(g.integers(2, 11))
        dist = random_count_distribution(g, n)
        cov = sign * pair_covariance(dist)
        mean, var = dist_moments(dist)
        e = mean / n
        worst = max(worst, abs(cov - (var - n * e * (1 - e)) / (n * (n - 1))))
        if n <= 6:
            vecs = np.array(list(product((0, 1), repeat=n)))
            probs = np.array([assignment_probability(dist, d) for d in vecs])
            e1 = float(probs @ vecs[:, 0])
            e12 = float(probs @ (vecs[:, 0] * vecs[:, 1]))
            worst = max(worst, abs(cov - (e12 - e1 * e1)), abs(probs.sum() - 1.0))
    return worst


def check_theorem1(trials=50, seed=0, fault=False):
    """Decomposition identities on random populations; zero bias under
    product laws. Returns the largest identity residual."""
    g = streams.stream(seed, 0x71)
    worst = 0.0
    for t in range(trials):
        N = int(g.integers(4, 11))
        cai = t % 5 == 4
        pop = random_population(g, N, n_values=int(g.integers(1, 3)), cai=cai)
        dec = phi_itr_enumerate(pop)
        res = np.abs(dec.route_residuals())
        if fault:
            res = np.abs(np.array(dec.route_residuals()) + 2.0 * dec.b_ade)
        worst = max(worst, float(res.max()))
        if cai:
            worst = max(worst, abs(dec.b_ade), abs(dec.b_ade_1), abs(dec.b_ade_0))
    return worst


def random_moment_lp(g, n_max=20):
    """Random instance; about one in five is infeasible by construction."""
    n = int(g.integers(1, n_max + 1))
    mu = g.uniform(0.0, n)
    vmax = mu * (n - mu)
    lo_min = (mu - np.floor(mu)) * (np.ceil(mu) - mu)  # smallest attainable variance
    kind = g.random()
    if kind < 0.1:
        lo, hi = vmax * 1.05 + 0.1, vmax * 1.2 + 0.2
    elif kind < 0.2 and lo_min > 1e-6:
        lo, hi = 0.0, 0.5 * lo_min
    else:
        lo = g.uniform(lo_min, vmax)
        hi = g.uniform(lo, vmax)
    direction = "maximize" if g.random() < 0.5 else "minimize"
    return MomentLP(g.normal(size=n + 1), mu, (lo, hi), direction)


def check_lp(trials=200, seed=0, fault=False):
    """Simplex against vertex enumeration; statuses must agree."""
    g = streams.stream(seed, 0x1B)
    worst = 0.0
    for _ in range(trials):
        lp = random_moment_lp(g)
        a, b = solve_moment_lp(lp), vertex_oracle(lp)
        if a.status != b.status:
            return float("inf")
        if a.status == "optimal":
            va = -a.objective_value if fault else a.objective_value
            worst = max(worst, abs(va - b.objective_value))
    return worst


def small_problem(g, sizes, effect=1.0, seed=0):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    d = np.zeros(labels.size, dtype=np.int8)
    for s, n in enumerate(sizes):
        k = int(g.integers(1, n))
        d[np.flatnonzero(labels == s)[g.choice(n, k, replace=False)]] = 1
    y = g.normal(size=labels.size) + effect * d
    strata = StratifiedSample.from_labels(labels, d)
    return RandomizationProblem(within_stratum_ranks(y, strata), d, strata, seed=seed)


SMALL_DESIGNS = ([4, 4, 4], [6, 6], [3, 4, 5], [5, 7], [2, 3, 3, 4])


def check_exact_mc(trials=3, seed=0, fault=False, xis=(1.0, 1.5, 2.0, 3.0), B_final=30000):
    """Largest |MC bound - exact bound| in Monte Carlo standard errors."""
    g = streams.stream(seed, 0xE8)
    worst = 0.0
    for t in range(trials):
        sizes = SMALL_DESIGNS[t % len(SMALL_DESIGNS)]
        problem = small_problem(g, sizes, g.uniform(0.0, 1.5), seed=seed + t)
        config = SensitivityConfig(seed=seed + t, B_final=B_final, B_base=B_final)
        for xi in xis:
            mc = optimize_bounds(problem, xi, config)
            ex = exact_pvalue_bounds(problem, xi)
            for k in ("lower", "upper"):
                se = max(mc[k].se, 1.0 / B_final)
                diff = mc[k].p - ex[k]
                worst = max(worst, abs(-diff - 1.0 if fault else diff) / se)
    return worst


_CHECKS = {
    "prop1": (check_prop1, 1e-12),
    "theorem1": (check_theorem1, 1e-10),
    "lp": (check_lp, 1e-8),
    "exact-mc": (check_exact_mc, 3.0),
}


def run_suite(name, trials=None, seed=0, fault=False):
    if name not in _CHECKS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    check, tol = _CHECKS[name]
    trials = DEFAULT_TRIALS[name] if trials is None else trials
    start = time.perf_counter()
    err = check(trials=trials, seed=seed, fault=fault)
    elapsed = time.perf_counter() - start
    detail = "status mismatch" if err == float("inf") else ""
    return SuiteResult(name, bool(err <= tol), trials, err, tol, elapsed, detail)
