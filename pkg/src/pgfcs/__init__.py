"""Finitely correlated states, transfer channels and quantum Markov chain approximations."""

from pgfcs.densekit import (
    Spectrum,
    eig_general,
    kron_all,
    matrix_sqrt_psd,
    norm_op,
    norm_trace,
    partial_trace,
    pinv_sqrt,
    vec,
    unvec,
)
from pgfcs.fcskit import PgfcsModel, builtin_model, load_model, random_model

__version__ = "0.1.0"

__all__ = [
    "Spectrum",
    "eig_general",
    "kron_all",
    "matrix_sqrt_psd",
    "norm_op",
    "norm_trace",
    "partial_trace",
    "pinv_sqrt",
    "vec",
    "unvec",
    "PgfcsModel",
    "builtin_model",
    "load_model",
    "random_model",
]
