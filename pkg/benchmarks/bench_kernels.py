"""Compare the compiled and numpy kernel backends.

Run ``python3 benchmarks/bench_kernels.py``. Each kernel gets the same
pre-drawn uniforms on both backends; outputs are checked for bitwise
equality before timing.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from caisens.assignment import binomial_count_dist, precompute_conditional_stats
from caisens.kernels import get_backend


def cases(n, L, B, seed=0):
    g = np.random.default_rng(seed)
    q = g.permutation(n).astype(float) + 1.0
    table = precompute_conditional_stats(q, L, g, exhaustive_cap=0)
    cdf = binomial_count_dist(n, 0.3).cdf()
    u_shuffle = g.random((L, n))
    u_count, u_pick = g.random(B), g.random(B)
    thresholds = g.uniform(0, q.sum() * 0.3, B)
    return {
        "permuted_prefix_sums": lambda k: k.permuted_prefix_sums(q, u_shuffle),
        "subset_sums": lambda k: k.subset_sums(q[:24], 4),
        "draw_stratum": lambda k: k.draw_stratum(cdf, table.row_offsets, table.values, u_count, u_pick),
        "tail_counts": lambda k: k.tail_counts(table.row_offsets, table.values, thresholds),
    }


END_TO_END = """
import time
from caisens.oracle.studies import calibrated_dataset
from caisens.sensitivity import SensitivityConfig, prepare, optimize_bounds
cfg = SensitivityConfig(seed=1)
problem, _, _ = prepare(calibrated_dataset("heavy_tailed", seed=1), cfg, warn=False)
problem.tables("right")
t = time.perf_counter()
b = optimize_bounds(problem, 2.0, cfg)
print(time.perf_counter() - t, b["upper"].p)
"""


def end_to_end():
    """Both bounds at xi=2 on the calibrated heavy-tailed design, per backend."""
    out = {}
    for backend, flag in (("python", "1"), ("cython", "0")):
        env = dict(os.environ, CAISENS_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        seconds, p = res.stdout.split()
        out[backend] = (float(seconds), p)
    print(f"optimize_bounds(xi=2): python {out['python'][0]:.2f}s, cython {out['cython'][0]:.2f}s, "
          f"speedup {out['python'][0] / out['cython'][0]:.1f}, upper P identical: {out['python'][1] == out['cython'][1]}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100, help="stratum size")
    ap.add_argument("--L", type=int, default=2000, help="table draws per count")
    ap.add_argument("--B", type=int, default=2500, help="Monte Carlo draws")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args()
    try:
        fast = get_backend("cython")
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return
    slow = get_backend("python")
    print(f"n={args.n} L={args.L} B={args.B}")
    print(f"{'kernel':<22}{'python ms':>11}{'cython ms':>11}{'speedup':>9}  identical")
    for name, fn in cases(args.n, args.L, args.B).items():
        same = np.array_equal(fn(fast), fn(slow))
        t_py = min(timeit.repeat(lambda: fn(slow), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: fn(fast), number=1, repeat=args.repeat))
        print(f"{name:<22}{1e3 * t_py:>11.2f}{1e3 * t_c:>11.2f}{t_py / t_c:>9.1f}  {same}")
    if not args.skip_end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
