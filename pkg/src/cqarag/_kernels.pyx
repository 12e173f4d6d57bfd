# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: the random-walk sweep behind personalized PageRank
and the LCS length used by the subsequence-overlap metric."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_left_matvec(cnp.int64_t[::1] indptr,
                    cnp.int64_t[::1] indices,
                    double[::1] data,
                    double[::1] x,
                    double[::1] out):
    """out := x @ P for a CSR row-stochastic matrix P (out must be zeroed)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double xi
    for i in range(n):
        xi = x[i]
        if xi == 0.0:
            continue
        for k in range(indptr[i], indptr[i + 1]):
            out[indices[k]] += xi * data[k]


def lcs_length(cnp.int64_t[::1] a, cnp.int64_t[::1] b):
    """Length of the longest common subsequence of two token-id sequences."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] prev_arr = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cur_arr = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef Py_ssize_t i, j
    cdef cnp.int64_t ai
    for i in range(n):
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            elif prev[j + 1] >= cur[j]:
                cur[j + 1] = prev[j + 1]
            else:
                cur[j + 1] = cur[j]
        prev, cur = cur, prev
    return int(prev[m])
