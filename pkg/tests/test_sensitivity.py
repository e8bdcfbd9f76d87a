import numpy as np
import pytest

from caisens import rng as streams
from caisens.assignment import CountDistribution, MechanismSet
from caisens.dataset import DataError, Dataset
from caisens.oracle import exact_pvalue_bounds, exact_tail_probability
from caisens.oracle.studies import calibrated_dataset
from caisens.sensitivity import (
    CurvePoint,
    InfeasibleLPError,
    SensitivityConfig,
    SensitivityCurve,
    add_one_pvalue,
    baseline_pvalue,
    conditional_rejection_profile,
    optimize_bounds,
    prepare,
    robustness_value,
    run_sensitivity,
    sensitivity_curve,
    two_sided_bounds,
)
from conftest import make_problem

FAST = dict(B_base=4000, B_inner=500, B_final=4000, L=500, sweeps=4, restarts=2)


def test_config_validation():
    with pytest.raises(ValueError):
        SensitivityConfig(xi_grid=(1.0, 1.0))
    with pytest.raises(ValueError):
        SensitivityConfig(xi_grid=(0.5, 2.0))
    with pytest.raises(ValueError):
        SensitivityConfig(alpha=1.5)
    with pytest.raises(ValueError):
        SensitivityConfig(B_inner=0)
    with pytest.raises(ValueError):
        SensitivityConfig(tail="up")
    assert SensitivityConfig().to_dict()["B_base"] == 50000


def test_add_one_convention():
    assert add_one_pvalue(np.array([1.0, 2.0, 3.0]), 10.0) == 0.25
    assert add_one_pvalue(np.array([1.0, 2.0, 3.0]), 0.0) == 1.0


def test_baseline_extremes(tiny_problem):
    g = streams.stream(0, 1)
    tiny_problem.T_obs = -1.0
    assert baseline_pvalue(tiny_problem, 1000, g) == 1.0
    tiny_problem.T_obs = 100.0
    assert baseline_pvalue(tiny_problem, 1000, g) == 1.0 / 1001


def test_profile_single_stratum(tiny_problem):
    a = conditional_rejection_profile(tiny_problem, 0, tiny_problem.binomial_mechanisms(), 50, streams.stream(0, 2))
    assert a.tolist() == [0.0, 0.5, 1.0]


def test_profile_bounds_and_extremes():
    problem = make_problem([6, 7, 5], seed=3)
    a = conditional_rejection_profile(problem, 1, problem.binomial_mechanisms(), 800, streams.stream(0, 2))
    assert ((a >= 0) & (a <= 1)).all()
    assert a[-1] >= a[0]


def test_xi_one_collapses_to_baseline():
    problem = make_problem([8, 9, 7], seed=4)
    cfg = SensitivityConfig(seed=11, **FAST)
    b = optimize_bounds(problem, 1.0, cfg)
    base = baseline_pvalue(problem, cfg.B_base, streams.stream(11, streams.BASELINE, 0))
    assert b["upper"].p == b["lower"].p == base


def test_two_unit_example_bounds_are_constant(tiny_problem):
    # pi = (v/2, 1-v, v/2) against a = (0, 1/2, 1) gives 1/2 for every v
    ex = exact_pvalue_bounds(tiny_problem, 4.0)
    assert ex["lower"] == pytest.approx(0.5, abs=1e-15) and ex["upper"] == pytest.approx(0.5, abs=1e-15)
    cfg = SensitivityConfig(seed=0, B_final=30000)
    b = optimize_bounds(tiny_problem, 4.0, cfg)
    for k in ("lower", "upper"):
        assert abs(b[k].p - 0.5) <= 3 * b[k].se
    wide = b["lower"].mechanisms[0].probs
    assert wide[0] == pytest.approx(wide[2])


def test_exact_tail_left_matches_enumeration():
    problem = make_problem([3, 4], seed=6)
    laws = problem.binomial_mechanisms()
    right = exact_tail_probability(problem, laws, "right")
    left = exact_tail_probability(problem, laws, "left")
    # enumerate every assignment directly
    from itertools import product
    pr = pl = 0.0
    q0, q1 = problem._q
    for d0 in product((0, 1), repeat=3):
        for d1 in product((0, 1), repeat=4):
            p = np.prod([laws[0].probs[sum(d0)] / __import__("math").comb(3, sum(d0)),
                         laws[1].probs[sum(d1)] / __import__("math").comb(4, sum(d1))])
            t = q0 @ d0 + q1 @ d1
            pr += p * (t >= problem.T_obs - 1e-12)
            pl += p * (t <= problem.T_obs + 1e-12)
    assert right == pytest.approx(pr, abs=1e-12) and left == pytest.approx(pl, abs=1e-12)
    g = streams.stream(1, 1)
    mc_left = problem.tail_pvalue(laws, 40000, g, "left")
    assert abs(mc_left - left) < 4 * np.sqrt(left * (1 - left) / 40000)


def test_two_sided_examples():
    r = two_sided_bounds({"lower_p": 0.01, "upper_p": 0.03}, {"lower_p": 0.2, "upper_p": 0.40})
    assert r["upper_p"] == pytest.approx(0.06) and r["lower_p"] == pytest.approx(0.02)
    assert two_sided_bounds({"lower_p": 0.6, "upper_p": 0.6}, {"lower_p": 0.7, "upper_p": 0.7})["upper_p"] == 1.0
    assert two_sided_bounds({"lower_p": 0.5, "upper_p": 0.5}, {"lower_p": 0.5, "upper_p": 0.5})["upper_p"] == 1.0


def curve(points, baseline, alpha=0.05):
    pts = [CurvePoint(x, min(p, baseline), p, 0.0, 0.0) for x, p in points]
    return SensitivityCurve(pts, baseline, 0.0, alpha)


def test_robustness_value_examples():
    c = curve([(1.0, 0.0012), (1.25, 0.0526), (1.5, 0.0588)], 0.0012)
    assert robustness_value(c, 0.05) == 1.25
    # bisection stays inside the bracketing interval
    probe_calls = []

    def probe(x):
        probe_calls.append(x)
        return 0.0012 + (0.0526 - 0.0012) * (x - 1.0) / 0.25
    refined = robustness_value(c, 0.05, probe)
    assert 1.0 < refined <= 1.25 and len(probe_calls) == 3
    assert refined == pytest.approx(1.25, abs=0.0313)
    u = curve([(1.0, 0.537), (1.5, 0.758)], 0.537)
    assert robustness_value(u, 0.05) == 1.0 and u.uninformative
    assert robustness_value(curve([(1.0, 0.001), (8.0, 0.02)], 0.001), 0.05) is None


def test_zero_treated_rejected():
    ds = Dataset(np.arange(10.0), np.zeros(10, int), np.arange(10.0)[:, None], ("x",))
    with pytest.raises(DataError):
        run_sensitivity(ds, SensitivityConfig(**FAST))


def test_infeasible_error_message():
    err = InfeasibleLPError(2, 1.5)
    assert err.stratum == 2 and "stratum 2" in str(err)


@pytest.fixture(scope="module")
def small_curve():
    ds = calibrated_dataset("heavy_tailed", seed=3, N=160)
    cfg = SensitivityConfig(seed=5, xi_grid=(1.0, 1.5, 3.0), K=3, **FAST)
    return ds, cfg, run_sensitivity(ds, cfg)


def test_curve_invariants(small_curve):
    _, _, c = small_curve
    assert c.points[0].lower_p == c.points[0].upper_p == c.baseline_p
    assert (np.diff(c.upper_p) >= 0).all() and (np.diff(c.lower_p) <= 0).all()
    assert (c.lower_p <= c.baseline_p).all() and (c.upper_p >= c.baseline_p).all()
    assert ((c.upper_p > 0) & (c.upper_p <= 1) & (c.lower_p > 0)).all()
    for p in c.points:
        assert len(p.upper_mechanisms) == len(p.lower_mechanisms)
    assert set(c.rows()[0]) == {"xi", "lower_p", "upper_p", "lower_mc_se", "upper_mc_se"}


def test_curve_is_deterministic_and_thread_independent(small_curve):
    ds, cfg, c = small_curve
    again = run_sensitivity(ds, SensitivityConfig(**{**cfg.to_dict(), "threads": 2}))
    assert again.rows() == c.rows()
    assert again.robustness_value == c.robustness_value
    other = run_sensitivity(ds, SensitivityConfig(**{**cfg.to_dict(), "seed": 6}))
    assert other.T_obs == c.T_obs
    assert other.rows() != c.rows()


def test_two_sided_curve():
    problem = make_problem([10, 12], seed=8, effect=0.3)
    cfg = SensitivityConfig(seed=2, xi_grid=(1.0, 2.0), tail="two-sided", **FAST)
    c = sensitivity_curve(problem, cfg)
    right = sensitivity_curve(problem, SensitivityConfig(**{**cfg.to_dict(), "tail": "right"}))
    left = sensitivity_curve(problem, SensitivityConfig(**{**cfg.to_dict(), "tail": "left"}))
    assert c.baseline_p == pytest.approx(min(1.0, 2 * min(right.baseline_p, left.baseline_p)))
    assert c.upper_p[1] == pytest.approx(min(1.0, 2 * min(right.upper_p[1], left.upper_p[1])))


def test_prepare_excludes_degenerate_strata():
    g = np.random.default_rng(0)
    x = np.concatenate([g.normal(-3, 0.3, 40), g.normal(0, 1, 80)])
    d = np.concatenate([np.zeros(40, int), (g.random(80) < 0.5).astype(int)])
    d[0] = 1  # keeps the propensity fit away from exact separation
    ds = Dataset(g.normal(size=120) + d, d, x[:, None], ("x",))
    problem, _, _ = prepare(ds, SensitivityConfig(K=6, **FAST), warn=False)
    assert problem.strata.degenerate[0] and problem.K == problem.strata.effective_K - 1
    assert problem.K == int((~problem.strata.degenerate).sum())
