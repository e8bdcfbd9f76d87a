"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``CAISENS_PURE_PYTHON=1`` forces the numpy fallback. Both backends
take the same pre-drawn uniforms and return identical results.
"""

import os

from caisens import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("CAISENS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from caisens import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def get_backend(name=None):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from caisens import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


permuted_prefix_sums = _impl.permuted_prefix_sums
subset_sums = _impl.subset_sums
draw_stratum = _impl.draw_stratum
tail_counts = _impl.tail_counts
