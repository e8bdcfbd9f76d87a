"""Reproducible random streams.

Every stochastic routine takes an explicit :class:`numpy.random.Generator`.
Generators are Philox (counter based) instances keyed by a master seed and a
tuple of stream indices, so any sub-computation can be replayed in isolation
and concurrent tasks never share state.

Stream keys used by the library (first element of the key tuple):

====  =====================================================
0     conditional statistic tables, one sub-key per stratum
1     baseline P-value draws
2     coordinate-descent inner draws (sweep, stratum)
3     final bound evaluation draws (tail)
4     study replications (replication index)
5     robustness-value probes
====  =====================================================
"""

import numpy as np

TABLES = 0
BASELINE = 1
INNER = 2
FINAL = 3
REPLICATION = 4
PROBE = 5


def stream(seed, *key):
    """Return the generator for ``(seed, key)``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
