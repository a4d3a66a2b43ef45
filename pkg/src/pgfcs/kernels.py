"""Kernel backend selection.

The compiled extension is used when it imports; set ``PGFCS_PURE=1`` to force
the numpy fallback. The compiled contraction only wins while numpy's call
overhead dominates, so above ``CROSSOVER`` (k times the larger local
dimension) ``conj_last`` hands over to the BLAS-backed einsum either way.
"""

import os

from pgfcs import _pykernels

CROSSOVER = 40

BACKEND = "numpy"
_impl = _pykernels
if os.environ.get("PGFCS_PURE", "") not in ("1", "true", "yes"):
    try:
        from pgfcs import _ckernels

        _impl = _ckernels
        BACKEND = "cython"
    except ImportError:
        pass


def conj_last(x, ops, k):
    """sum_s (1_k (x) A_s) x (1_k (x) A_s)^dagger for ops of shape (n, d_out, d_in)."""
    if _impl is _pykernels or k * max(ops.shape[1], ops.shape[2]) > CROSSOVER:
        return _pykernels.conj_last(x, ops, k)
    return _impl.conj_last(x, ops, k)


def xlogx_sum(w):
    """sum w ln w over the positive entries of w."""
    if _impl is _pykernels or len(w) > 1024:
        return _pykernels.xlogx_sum(w)
    return _impl.xlogx_sum(w)
