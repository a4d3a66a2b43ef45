# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled contraction kernels; same signatures as _pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


def conj_last(x, ops, Py_ssize_t k):
    cdef double complex[:, :, :] a = np.ascontiguousarray(ops, dtype=np.complex128)
    cdef Py_ssize_t ns = a.shape[0], dout = a.shape[1], din = a.shape[2]
    cdef double complex[:, :, :, :] t = np.ascontiguousarray(x, dtype=np.complex128).reshape(k, din, k, din)
    out_arr = np.zeros((k, dout, k, dout), dtype=np.complex128)
    tmp_arr = np.empty((k, dout, din), dtype=np.complex128)
    cdef double complex[:, :, :, :] out = out_arr
    cdef double complex[:, :, :] tmp = tmp_arr
    cdef Py_ssize_t s, i, p, m, j, n, q
    cdef double complex acc
    with nogil:
        for s in range(ns):
            for j in range(k):
                # tmp[i, p, n] = sum_m A[p, m] x[i, m, j, n]
                for i in range(k):
                    for p in range(dout):
                        for n in range(din):
                            acc = 0
                            for m in range(din):
                                acc = acc + a[s, p, m] * t[i, m, j, n]
                            tmp[i, p, n] = acc
                # out[i, p, j, q] += sum_n tmp[i, p, n] conj(A[q, n])
                for i in range(k):
                    for p in range(dout):
                        for q in range(dout):
                            acc = 0
                            for n in range(din):
                                acc = acc + tmp[i, p, n] * a[s, q, n].conjugate()
                            out[i, p, j, q] = out[i, p, j, q] + acc
    return out_arr.reshape(k * dout, k * dout)


def xlogx_sum(w):
    cdef double[:] v = np.ascontiguousarray(w, dtype=np.float64).ravel()
    cdef Py_ssize_t i
    cdef double acc = 0.0
    with nogil:
        for i in range(v.shape[0]):
            if v[i] > 0.0:
                acc += v[i] * log(v[i])
    return acc
