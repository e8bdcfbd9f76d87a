import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from caisens import rng as streams
from caisens.assignment import binomial_count_dist, dist_moments
from caisens.optimizer import MomentLP, solve_moment_lp, vertex_oracle
from caisens.oracle.suites import random_moment_lp

SOLVERS = (solve_moment_lp, vertex_oracle)


@pytest.mark.parametrize("solve", SOLVERS)
def test_collapsed_band_returns_binomial(solve):
    sol = solve(MomentLP([3.0, -1.0, 2.0], 1.0, (0.5, 0.5)))
    assert sol.status == "optimal"
    assert np.allclose(sol.dist.probs, [0.25, 0.5, 0.25], atol=1e-12)


@pytest.mark.parametrize("solve", SOLVERS)
def test_one_parameter_family(solve):
    up = solve(MomentLP([0.0, 1.0, 0.0], 1.0, (0.5, 1.0), "maximize"))
    lo = solve(MomentLP([0.0, 1.0, 0.0], 1.0, (0.5, 1.0), "minimize"))
    assert up.objective_value == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(up.dist.probs, [0.25, 0.5, 0.25], atol=1e-12)
    assert lo.objective_value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(lo.dist.probs, [0.5, 0.0, 0.5], atol=1e-12)
    assert "var-hi" in lo.active_constraints and "var-lo" in up.active_constraints


@pytest.mark.parametrize("solve", SOLVERS)
def test_constant_objective(solve):
    sol = solve(MomentLP(np.full(6, 0.37), 2.2, (1.0, 3.0)))
    assert sol.status == "optimal" and sol.objective_value == pytest.approx(0.37, abs=1e-12)


@pytest.mark.parametrize("solve", SOLVERS)
def test_variance_above_cap_is_infeasible(solve):
    assert solve(MomentLP([0.0, 1.0, 0.0], 1.0, (2.5, 3.0))).status == "infeasible"
    assert solve(MomentLP([0.0, 1.0, 0.0], 2.5, (0.0, 1.0))).status == "infeasible"


def test_single_unit_stratum_two_point():
    sol = solve_moment_lp(MomentLP.for_stratum([0.2, 0.9], 1, 0.3, 5.0))
    assert np.allclose(sol.dist.probs, [0.7, 0.3])


def test_invalid_problem_rejected():
    with pytest.raises(ValueError):
        MomentLP([1.0], 0.0, (0, 0))
    with pytest.raises(ValueError):
        MomentLP([1.0, np.nan], 0.5, (0, 0))
    with pytest.raises(ValueError):
        MomentLP([1.0, 0.0], 0.5, (0, 0), "sideways")


def test_matches_oracle_on_random_instances():
    g = streams.stream(7, 1)
    for _ in range(300):
        lp = random_moment_lp(g)
        a, b = solve_moment_lp(lp), vertex_oracle(lp)
        assert a.status == b.status
        if a.status == "optimal":
            assert abs(a.objective_value - b.objective_value) <= 1e-8


def test_oracle_n10_cross_validation():
    g = streams.stream(8, 1)
    for _ in range(200):
        e = g.uniform(0.05, 0.95)
        lp = MomentLP.for_stratum(g.random(11), 10, e, g.uniform(1, 6), "maximize" if g.random() < .5 else "minimize")
        assert abs(solve_moment_lp(lp).objective_value - vertex_oracle(lp).objective_value) <= 1e-8


@settings(max_examples=80, deadline=None)
@given(
    n=st.integers(2, 20),
    e=st.floats(0.02, 0.98),
    xi=st.floats(1.0, 10.0),
    seed=st.integers(0, 2 ** 20),
)
def test_solution_properties(n, e, xi, seed):
    a = np.random.default_rng(seed).random(n + 1)
    lp_max = MomentLP.for_stratum(a, n, e, xi, "maximize")
    lp_min = MomentLP.for_stratum(a, n, e, xi, "minimize")
    up, lo = solve_moment_lp(lp_max), solve_moment_lp(lp_min)
    assert up.status == lo.status == "optimal"
    assert up.objective_value >= lo.objective_value - 1e-12
    for sol, lp in ((up, lp_max), (lo, lp_min)):
        mean, var = dist_moments(sol.dist)
        v_lo, v_hi = lp.variance_interval
        assert abs(mean - lp.mean_target) <= 1e-9 * max(1, n)
        assert v_lo - 1e-9 * n * n <= var <= v_hi + 1e-9 * n * n
        assert np.count_nonzero(sol.dist.probs > 1e-14) <= 4
    # the binomial law is always feasible, so it bounds both optima
    b = a @ binomial_count_dist(n, e).probs
    assert lo.objective_value - 1e-9 <= b <= up.objective_value + 1e-9
    # widening the band never hurts either direction
    wide_up = solve_moment_lp(MomentLP.for_stratum(a, n, e, xi * 1.5, "maximize"))
    wide_lo = solve_moment_lp(MomentLP.for_stratum(a, n, e, xi * 1.5, "minimize"))
    assert wide_up.objective_value >= up.objective_value - 1e-10
    assert wide_lo.objective_value <= lo.objective_value + 1e-10


def test_binomial_under_collapsed_band():
    # n=2: three equalities pin the law; n=3 leaves a segment containing the binomial
    for e in (0.2, 0.5, 0.7):
        sol = solve_moment_lp(MomentLP.for_stratum([0.3, -1.0, 2.0], 2, e, 1.0))
        assert np.allclose(sol.dist.probs, binomial_count_dist(2, e).probs, atol=1e-12)
        a = np.array([0.1, 0.7, -0.4, 0.9])
        up = solve_moment_lp(MomentLP.for_stratum(a, 3, e, 1.0, "maximize"))
        lo = solve_moment_lp(MomentLP.for_stratum(a, 3, e, 1.0, "minimize"))
        b = a @ binomial_count_dist(3, e).probs
        assert lo.objective_value - 1e-12 <= b <= up.objective_value + 1e-12
