"""Randomization-test sensitivity analysis for conditional assignment
independence under interference."""

from caisens.assignment import (
    CountDistribution,
    MechanismSet,
    assignment_probability,
    binomial_count_dist,
    pair_covariance,
)
from caisens.dataset import DataError, Dataset, ValidationReport, load_csv, one_hot_expand
from caisens.optimizer import MomentLP, solve_moment_lp, vertex_oracle
from caisens.propensity import fit_logistic, predict_scores, stratify, balance_report
from caisens.sensitivity import (
    SensitivityConfig,
    SensitivityCurve,
    baseline_pvalue,
    optimize_bounds,
    robustness_value,
    run_sensitivity,
    two_sided_bounds,
)
from caisens.teststat import stratified_rank_sum, within_stratum_ranks

__version__ = "0.1.0"

__all__ = [
    "CountDistribution",
    "MechanismSet",
    "assignment_probability",
    "binomial_count_dist",
    "pair_covariance",
    "DataError",
    "Dataset",
    "ValidationReport",
    "load_csv",
    "one_hot_expand",
    "MomentLP",
    "solve_moment_lp",
    "vertex_oracle",
    "fit_logistic",
    "predict_scores",
    "stratify",
    "balance_report",
    "SensitivityConfig",
    "SensitivityCurve",
    "baseline_pvalue",
    "optimize_bounds",
    "robustness_value",
    "run_sensitivity",
    "two_sided_bounds",
    "stratified_rank_sum",
    "within_stratum_ranks",
]
