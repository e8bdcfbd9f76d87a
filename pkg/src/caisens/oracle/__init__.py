"""Brute-force checks and simulation studies used to certify the engine."""

from caisens.oracle.enumeration import (
    Decomposition,
    PopulationSpec,
    OverlapError,
    phi_itr_enumerate,
    product_law,
    random_population,
)
from caisens.oracle.exact_bounds import exact_pvalue_bounds, exact_tail_probability
from caisens.oracle.studies import (
    calibrated_sensitivity_study,
    fisher_power_study,
    simulate_ipw_study,
)
from caisens.oracle.synthetic import synthetic_lalonde

__all__ = [
    "Decomposition",
    "PopulationSpec",
    "OverlapError",
    "phi_itr_enumerate",
    "product_law",
    "random_population",
    "exact_pvalue_bounds",
    "exact_tail_probability",
    "simulate_ipw_study",
    "fisher_power_study",
    "calibrated_sensitivity_study",
    "synthetic_lalonde",
]
