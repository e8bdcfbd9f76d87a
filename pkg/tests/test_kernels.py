import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from caisens import kernels
from caisens.assignment import binomial_count_dist, precompute_conditional_stats

py = kernels.get_backend("python")
try:
    cy = kernels.get_backend("cython")
except ImportError:
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def case(n, L, B, seed, ties=False):
    g = np.random.default_rng(seed)
    q = (g.integers(1, 4, n) if ties else g.permutation(n) + 1).astype(float)
    table = precompute_conditional_stats(q, L, g, exhaustive_cap=0)
    cdf = binomial_count_dist(n, g.uniform(0.1, 0.9)).cdf()
    return g, q, table, cdf


@needs_cython
@pytest.mark.parametrize("n,seed,ties", [(1, 0, False), (2, 1, False), (17, 2, True), (60, 3, False)])
def test_backends_bitwise_equal(n, seed, ties):
    g, q, table, cdf = case(n, 50, 400, seed, ties)
    u = g.random((50, n))
    np.testing.assert_array_equal(py.permuted_prefix_sums(q, u), cy.permuted_prefix_sums(q, u))
    uc, up = g.random(400), g.random(400)
    np.testing.assert_array_equal(py.draw_stratum(cdf, table.row_offsets, table.values, uc, up),
                                  cy.draw_stratum(cdf, table.row_offsets, table.values, uc, up))
    thr = np.concatenate([g.uniform(0, q.sum(), 200), table.values[:50], [-1.0, q.sum() + 1]])
    np.testing.assert_array_equal(py.tail_counts(table.row_offsets, table.values, thr),
                                  cy.tail_counts(table.row_offsets, table.values, thr))


@needs_cython
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 14), st.data())
def test_subset_sums_agree(n, data):
    m = data.draw(st.integers(0, n))
    q = np.array(data.draw(st.lists(st.integers(1, 30), min_size=n, max_size=n)), dtype=float)
    a, b = py.subset_sums(q, m), cy.subset_sums(q, m)
    np.testing.assert_array_equal(a, b)
    from math import comb
    assert a.shape == (comb(n, m),)


def test_subset_sums_large_m():
    q = np.arange(1.0, 31.0)
    out = py.subset_sums(q, 29)
    assert out.shape == (30,) and out.max() == q.sum() - 1
    if cy is not None:
        np.testing.assert_array_equal(out, cy.subset_sums(q, 29))


def test_fallback_selected_by_environment():
    code = "from caisens import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, CAISENS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@needs_cython
def test_default_backend_is_compiled():
    if os.environ.get("CAISENS_PURE_PYTHON") in ("1", "true", "yes"):
        pytest.skip("fallback forced by environment")
    assert kernels.BACKEND == "cython"
