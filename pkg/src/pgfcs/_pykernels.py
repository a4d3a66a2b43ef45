"""Pure numpy implementations of the contraction kernels."""

import numpy as np


def conj_last(x, ops, k):
    """Return sum_s (1_k (x) A_s) x (1_k (x) A_s)^dagger.

    ``x`` is a (k*d_in, k*d_in) matrix, ``ops`` has shape (n, d_out, d_in).
    """
    ops = np.asarray(ops, dtype=complex)
    _, d_out, d_in = ops.shape
    t = np.asarray(x, dtype=complex).reshape(k, d_in, k, d_in)
    y = np.einsum("spm,ambn,sqn->apbq", ops, t, ops.conj(), optimize=True)
    return y.reshape(k * d_out, k * d_out)


def xlogx_sum(w):
    w = np.asarray(w, dtype=float)
    w = w[w > 0.0]
    return float(np.sum(w * np.log(w)))
