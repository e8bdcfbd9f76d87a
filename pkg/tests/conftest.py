import numpy as np
import pytest

from caisens.propensity import StratifiedSample
from caisens.sensitivity import RandomizationProblem
from caisens.teststat import within_stratum_ranks


def make_problem(sizes, seed=0, effect=1.0, L=2000, rng_seed=None):
    """Small stratified problem with random outcomes and treated sets."""
    g = np.random.default_rng(seed if rng_seed is None else rng_seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    d = np.zeros(labels.size, dtype=np.int8)
    for s, n in enumerate(sizes):
        k = int(g.integers(1, n)) if n > 1 else 1
        d[np.flatnonzero(labels == s)[g.choice(n, k, replace=False)]] = 1
    y = g.normal(size=labels.size) + effect * d
    strata = StratifiedSample.from_labels(labels, d)
    return RandomizationProblem(within_stratum_ranks(y, strata), d, strata, L=L, seed=seed)


@pytest.fixture
def tiny_problem():
    """One stratum of two units with ranks [1, 2] and the top unit treated."""
    strata = StratifiedSample.from_labels([0, 0], [0, 1])
    return RandomizationProblem(np.array([1.0, 2.0]), np.array([0, 1]), strata, seed=0)
