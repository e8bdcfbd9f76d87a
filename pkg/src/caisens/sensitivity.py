"""Worst-case Fisher P-value bounds when within-stratum assignments may be
dependent, and the robustness value of a rejection.

The assignment family is the two-stage design with stratum treated-count laws
whose mean is pinned at n_s * e_s and whose variance may exceed the binomial
one by at most a factor ``xi``. Bounds are found by cyclic coordinate descent:
each step fixes all strata but one, estimates the rejection probability as a
function of that stratum's count, and solves a moment LP.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
import logging
import os

import numpy as np

from caisens import rng as streams
from caisens.assignment import (
    EXHAUSTIVE_CAP,
    MechanismSet,
    binomial_count_dist,
    draw_statistic,
    precompute_conditional_stats,
)
from caisens.dataset import DataError
from caisens.optimizer import MomentLP, solve_moment_lp
from caisens.propensity import fit_logistic, predict_scores, stratify
from caisens.teststat import stratified_rank_sum, within_stratum_ranks
from caisens import kernels

logger = logging.getLogger(__name__)

DEFAULT_XI_GRID = (1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 8.0)
TAILS = ("right", "left", "two-sided")
_TAIL_CODE = {"right": 0, "left": 1}


class InfeasibleLPError(RuntimeError):
    def __init__(self, stratum, xi):
        super().__init__(f"moment LP infeasible in stratum {stratum} at xi={xi:g}")
        self.stratum = stratum
        self.xi = xi


@dataclass(frozen=True)
class SensitivityConfig:
    xi_grid: tuple = DEFAULT_XI_GRID
    alpha: float = 0.05
    B_base: int = 50000
    B_inner: int = 2500
    B_final: int = 30000
    L: int = 2000
    sweeps: int = 10
    tail: str = "right"
    seed: int = 0
    K: int = 6
    exhaustive_cap: int = EXHAUSTIVE_CAP
    refine: bool = True
    threads: int = 1
    early_stop: float = 1e-4
    restarts: int = 8

    def __post_init__(self):
        grid = tuple(float(x) for x in self.xi_grid)
        if not grid or grid[0] < 1.0 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("xi_grid must be strictly ascending with all values >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("B_base", "B_inner", "B_final", "L", "sweeps", "K", "restarts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.tail not in TAILS:
            raise ValueError(f"tail must be one of {TAILS}")
        object.__setattr__(self, "xi_grid", grid)

    def to_dict(self):
        return asdict(self)


class RandomizationProblem:
    """Observed statistic plus the conditional tables needed to simulate it.

    Strata whose treated share is 0 or 1 have no assignment variability and
    are left out of both the observed and the simulated statistic.
    """

    def __init__(self, ranks, treatments, strata, L=2000, seed=0, exhaustive_cap=EXHAUSTIVE_CAP, warn=True):
        self.strata = strata
        self.ranks = np.asarray(ranks, dtype=np.float64)
        self.treatments = np.asarray(treatments)
        self.included = [s for s in range(strata.effective_K) if not strata.degenerate[s]]
        if warn and strata.degenerate.any():
            logger.warning(
                "strata %s (1-based) have treated share 0 or 1 and are excluded from the statistic",
                [int(s) + 1 for s in np.flatnonzero(strata.degenerate)],
            )
        if not self.included:
            raise DataError("every stratum is all-treated or all-control; nothing to randomize")
        members = strata.members
        self.sizes = [int(strata.stratum_sizes[s]) for s in self.included]
        self.shares = [float(strata.treated_shares[s]) for s in self.included]
        self._q = [self.ranks[members[s]] for s in self.included]
        mask = np.isin(strata.labels, self.included)
        self.T_obs = stratified_rank_sum(self.ranks * mask, self.treatments)
        self._L = L
        self._seed = seed
        self._cap = exhaustive_cap
        self._tables = {}

    @property
    def K(self):
        return len(self.included)

    def tables(self, tail="right"):
        if tail not in self._tables:
            sign = 1.0 if tail == "right" else -1.0
            self._tables[tail] = [
                precompute_conditional_stats(
                    sign * q, self._L, streams.stream(self._seed, streams.TABLES, s), self._cap
                )
                for s, q in zip(self.included, self._q)
            ]
        return self._tables[tail]

    def observed(self, tail="right"):
        return self.T_obs if tail == "right" else -self.T_obs

    def binomial_mechanisms(self):
        return MechanismSet(binomial_count_dist(n, e) for n, e in zip(self.sizes, self.shares))

    def simulate(self, mechanisms, B, rng, tail="right"):
        return draw_statistic(self.tables(tail), mechanisms, rng.random((2, self.K, B)))

    def tail_pvalue(self, mechanisms, B, rng, tail="right"):
        T = self.simulate(mechanisms, B, rng, tail)
        return add_one_pvalue(T, self.observed(tail))


def add_one_pvalue(draws, observed):
    return (1.0 + np.count_nonzero(draws >= observed)) / (draws.shape[0] + 1.0)


def mc_se(p, B):
    return float(np.sqrt(p * (1.0 - p) / B))


def baseline_pvalue(problem, B_base, rng, tail="right"):
    """Add-one Monte Carlo P-value under stratified Bernoulli assignment."""
    return problem.tail_pvalue(problem.binomial_mechanisms(), B_base, rng, tail)


def conditional_rejection_profile(problem, s, mechanisms, B_inner, rng, tail="right"):
    """a(m) ~ Pr(T >= T_obs | M_s = m), other strata drawn from ``mechanisms``.

    The same draws of the other strata are used for every m, and stratum s's
    own contribution is integrated over its whole table row.
    """
    tables = problem.tables(tail)
    u = rng.random((2, problem.K, B_inner))
    rest = np.zeros(B_inner)
    for r, (table, dist) in enumerate(zip(tables, mechanisms)):
        if r != s:
            rest += kernels.draw_stratum(dist.cdf(), table.row_offsets, table.values, u[0, r], u[1, r])
    thresholds = problem.observed(tail) - rest
    table = tables[s]
    counts = kernels.tail_counts(table.row_offsets, table.values, thresholds)
    return counts / (B_inner * np.diff(table.row_offsets).astype(np.float64))


@dataclass
class Bound:
    p: float
    se: float
    mechanisms: MechanismSet
    sweeps: int = 0
    xi: float = 1.0


def optimize_bounds(problem, xi, config, tail="right", directions=("maximize", "minimize")):
    """Coordinate-descent extremal P-values at one ``xi``.

    Returns ``{"upper": Bound, "lower": Bound}`` (only the requested
    directions). At ``xi == 1`` both equal the baseline P-value.
    """
    if xi < 1.0:
        raise ValueError("xi must be at least 1")
    code = _TAIL_CODE[tail]
    key = {"maximize": "upper", "minimize": "lower"}
    if xi == 1.0:
        p = baseline_pvalue(problem, config.B_base, streams.stream(config.seed, streams.BASELINE, code), tail)
        b = Bound(p, mc_se(p, config.B_base), problem.binomial_mechanisms(), 0, 1.0)
        return {key[d]: b for d in directions}
    out = {}
    for direction in directions:
        best = None
        for start in range(config.restarts):
            mechs, sweeps_done = _coordinate_descent(problem, xi, config, tail, direction, start)
            # every start is scored on the same final draws
            p = problem.tail_pvalue(
                mechs, config.B_final, streams.stream(config.seed, streams.FINAL, code), tail
            )
            if best is None or (p > best.p if direction == "maximize" else p < best.p):
                best = Bound(p, mc_se(p, config.B_final), mechs, sweeps_done, xi)
        out[key[direction]] = best
    return out


def _starting_mechanisms(problem, xi, config, tail, direction, start):
    """Start 0 is the binomial design. Start 1 is a simultaneous (Jacobi) best
    response of every stratum to the binomial design, which reaches
    symmetric optima that one-at-a-time updates can miss. Later starts put
    every stratum at the vertex picked by a random linear objective."""
    code = _TAIL_CODE[tail]
    binom = list(problem.binomial_mechanisms())
    if start == 0:
        return binom
    g = streams.stream(config.seed, streams.INNER, code, start, 0, problem.K)
    mechs = []
    for s, (n, e) in enumerate(zip(problem.sizes, problem.shares)):
        if start == 1:
            a = conditional_rejection_profile(problem, s, binom, config.B_inner, g, tail)
            lp = MomentLP.for_stratum(a, n, e, xi, direction)
        else:
            lp = MomentLP.for_stratum(g.random(n + 1), n, e, xi)
        sol = solve_moment_lp(lp)
        mechs.append(sol.dist if sol.status == "optimal" else binom[s])
    return mechs


def _coordinate_descent(problem, xi, config, tail, direction, start=0):
    code = _TAIL_CODE[tail]
    mechs = _starting_mechanisms(problem, xi, config, tail, direction, start)
    previous = [None] * problem.K
    sweeps_done = 0
    for sweep in range(config.sweeps):
        changed = False
        for s in range(problem.K):
            n, e = problem.sizes[s], problem.shares[s]
            if n == 1:
                continue
            a = conditional_rejection_profile(
                problem, s, mechs, config.B_inner,
                streams.stream(config.seed, streams.INNER, code, start, sweep, s), tail,
            )
            sol = solve_moment_lp(MomentLP.for_stratum(a, n, e, xi, direction))
            if sol.status != "optimal":
                raise InfeasibleLPError(problem.included[s], xi)
            moved = not np.array_equal(sol.dist.probs, mechs[s].probs)
            mechs[s] = sol.dist
            # profile noise moves the objective even when pi_s stays put
            if moved and (previous[s] is None or abs(sol.objective_value - previous[s]) > config.early_stop):
                changed = True
            previous[s] = sol.objective_value
        sweeps_done = sweep + 1
        if not changed:
            break
    return MechanismSet(mechs), sweeps_done


def two_sided_bounds(right, left):
    """Bonferroni combination of one-sided bound pairs: min(1, 2 min(right, left))."""
    return {
        "lower_p": min(1.0, 2.0 * min(right["lower_p"], left["lower_p"])),
        "upper_p": min(1.0, 2.0 * min(right["upper_p"], left["upper_p"])),
    }


@dataclass
class CurvePoint:
    xi: float
    lower_p: float
    upper_p: float
    lower_se: float
    upper_se: float
    lower_mechanisms: MechanismSet = None
    upper_mechanisms: MechanismSet = None
    raw_lower_p: float = None
    raw_upper_p: float = None


@dataclass
class SensitivityCurve:
    points: list
    baseline_p: float
    baseline_se: float
    alpha: float = 0.05
    tail: str = "right"
    robustness_value: float = None
    T_obs: float = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def xi(self):
        return np.array([p.xi for p in self.points])

    @property
    def upper_p(self):
        return np.array([p.upper_p for p in self.points])

    @property
    def lower_p(self):
        return np.array([p.lower_p for p in self.points])

    @property
    def uninformative(self):
        return self.baseline_p > self.alpha

    def rows(self):
        return [
            {
                "xi": p.xi,
                "lower_p": p.lower_p,
                "upper_p": p.upper_p,
                "lower_mc_se": p.lower_se,
                "upper_mc_se": p.upper_se,
            }
            for p in self.points
        ]


def envelope(raw, baseline):
    """Carry the best bound found so far forward along the grid.

    The admissible sets are nested in xi, so any mechanism found at a smaller
    xi (and the binomial one) is also admissible at a larger xi.
    """
    points = []
    best_up = best_lo = baseline
    for xi, bounds in raw:
        up, lo = bounds["upper"], bounds["lower"]
        if up.p > best_up.p:
            best_up = up
        if lo.p < best_lo.p:
            best_lo = lo
        points.append(CurvePoint(
            xi, best_lo.p, best_up.p, best_lo.se, best_up.se,
            best_lo.mechanisms, best_up.mechanisms, lo.p, up.p,
        ))
    return points


def one_sided_curve(problem, config, tail="right"):
    baseline = optimize_bounds(problem, 1.0, config, tail, ("maximize",))["upper"]
    grid = [x for x in config.xi_grid if x > 1.0]

    def work(xi):
        return xi, optimize_bounds(problem, xi, config, tail)

    if config.threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            raw = list(pool.map(work, grid))
    else:
        raw = [work(xi) for xi in grid]
    if config.xi_grid[0] == 1.0:
        raw.insert(0, (1.0, {"upper": baseline, "lower": baseline}))
    return baseline, envelope(raw, baseline)


def robustness_value(curve, alpha=None, probe=None, max_probes=3):
    """Smallest xi whose upper bound exceeds ``alpha``.

    Returns 1.0 when the baseline already exceeds alpha (the analysis is then
    uninformative) and ``None`` when no grid point exceeds it. ``probe(xi)``,
    if given, returns the upper bound at an off-grid xi and is used for up to
    ``max_probes`` bisection steps inside the bracketing grid interval.
    """
    alpha = curve.alpha if alpha is None else alpha
    if curve.baseline_p > alpha:
        return 1.0
    xi, up = curve.xi, curve.upper_p
    above = np.flatnonzero(up > alpha)
    if above.size == 0:
        return None
    j = int(above[0])
    if j == 0:
        return float(xi[0])
    lo, hi = float(xi[j - 1]), float(xi[j])
    floor = float(up[j - 1])
    if probe is not None:
        for _ in range(max_probes):
            mid = 0.5 * (lo + hi)
            if max(probe(mid), floor) > alpha:
                hi = mid
            else:
                lo = mid
    return hi


def sensitivity_curve(problem, config):
    """Bounds over ``config.xi_grid`` for the configured tail."""
    if config.tail == "two-sided":
        parts = {t: one_sided_curve(problem, config, t) for t in ("right", "left")}
        (b_r, pts_r), (b_l, pts_l) = parts["right"], parts["left"]
        points = []
        for r, l in zip(pts_r, pts_l):
            comb = two_sided_bounds(
                {"lower_p": r.lower_p, "upper_p": r.upper_p},
                {"lower_p": l.lower_p, "upper_p": l.upper_p},
            )
            up_src = r if r.upper_p <= l.upper_p else l
            lo_src = r if r.lower_p <= l.lower_p else l
            points.append(CurvePoint(
                r.xi, comb["lower_p"], comb["upper_p"], 2 * lo_src.lower_se, 2 * up_src.upper_se,
                lo_src.lower_mechanisms, up_src.upper_mechanisms,
            ))
        base = min(1.0, 2.0 * min(b_r.p, b_l.p))
        base_se = 2.0 * (b_r.se if b_r.p <= b_l.p else b_l.se)
    else:
        b, points = one_sided_curve(problem, config, config.tail)
        base, base_se = b.p, b.se
    curve = SensitivityCurve(points, base, base_se, config.alpha, config.tail, T_obs=problem.T_obs)

    def probe(xi):
        probe_cfg = config
        if config.tail == "two-sided":
            r = optimize_bounds(problem, xi, probe_cfg, "right", ("maximize",))["upper"].p
            l = optimize_bounds(problem, xi, probe_cfg, "left", ("maximize",))["upper"].p
            return min(1.0, 2.0 * min(r, l))
        return optimize_bounds(problem, xi, probe_cfg, config.tail, ("maximize",))["upper"].p

    curve.robustness_value = robustness_value(curve, config.alpha, probe if config.refine else None)
    if curve.uninformative:
        logger.warning(
            "baseline P-value %.4g exceeds alpha=%g; the sensitivity analysis is not informative",
            curve.baseline_p, config.alpha,
        )
    return curve


def prepare(dataset, config, warn=True):
    """Fit propensity scores, stratify and rank.

    Returns ``(problem, propensity_model, scores)``.
    """
    d = dataset.treatments
    if d.sum() == 0 or d.sum() == d.shape[0]:
        raise DataError("the data need both treated and control units")
    model = fit_logistic(dataset.covariates, d, names=dataset.covariate_names)
    scores = predict_scores(model, dataset.covariates)
    strata = stratify(scores, config.K, d)
    ranks = within_stratum_ranks(dataset.outcomes, strata)
    problem = RandomizationProblem(ranks, d, strata, config.L, config.seed, config.exhaustive_cap, warn)
    return problem, model, scores


def run_sensitivity(dataset, config=None):
    """Propensity fit, stratification, ranks, baseline and per-xi bounds."""
    config = config or SensitivityConfig()
    problem, model, _ = prepare(dataset, config)
    curve = sensitivity_curve(problem, config)
    strata = problem.strata
    curve.diagnostics = {
        "effective_K": strata.effective_K,
        "stratum_sizes": strata.stratum_sizes.tolist(),
        "treated_counts": strata.treated_counts.tolist(),
        "excluded_strata": [int(s) + 1 for s in np.flatnonzero(strata.degenerate)],
        "propensity_converged": model.converged,
        "table_modes": [t.mode for t in problem.tables("right")],
    }
    return curve


def default_threads():
    return os.cpu_count() or 1
