"""Kernel selection: compiled extension when built, fallback otherwise.

The two hot inner loops — the per-iteration random-walk sweep of
personalized PageRank and the LCS table fill — have a Cython
implementation (``cqarag._kernels``) and a fallback (scipy sparse matvec,
pure-Python DP). The compiled flavor is used when the extension imported
successfully and ``CQARAG_PURE`` is unset; ``benchmarks/bench_kernels.py``
compares the two.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

try:
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:  # pure checkout or failed build
    _kernels = None

HAVE_COMPILED = _kernels is not None
USE_COMPILED = HAVE_COMPILED and not os.environ.get("CQARAG_PURE")


class TransitionMatrix:
    """Row-stochastic CSR matrix with a left-multiply sweep y = x @ P."""

    def __init__(self, indptr: np.ndarray, indices: np.ndarray, data: np.ndarray, n: int,
                 compiled: bool | None = None):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.n = n
        self.compiled = USE_COMPILED if compiled is None else (compiled and HAVE_COMPILED)
        if not self.compiled:
            self._csr = sp.csr_matrix(
                (self.data, self.indices.astype(np.int32), self.indptr.astype(np.int32)),
                shape=(n, n),
            )

    def sweep(self, x: np.ndarray) -> np.ndarray:
        if self.compiled:
            out = np.zeros(self.n, dtype=np.float64)
            _kernels.csr_left_matvec(self.indptr, self.indices, self.data, x, out)
            return out
        return np.asarray(x @ self._csr).reshape(-1)

    def row_sums(self) -> np.ndarray:
        sums = np.zeros(self.n, dtype=np.float64)
        np.add.at(sums, np.repeat(np.arange(self.n), np.diff(self.indptr)), self.data)
        return sums


def lcs_length_py(a: list[int], b: list[int]) -> int:
    """Rolling-row LCS DP; the pure fallback for the compiled kernel."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for ai in a:
        cur = [0] * (len(b) + 1)
        for j, bj in enumerate(b):
            if ai == bj:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = max(prev[j + 1], cur[j])
        prev = cur
    return prev[-1]


def lcs_length(a: list[int], b: list[int]) -> int:
    if USE_COMPILED:
        return _kernels.lcs_length(
            np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
        )
    return lcs_length_py(a, b)


__all__ = ["TransitionMatrix", "lcs_length", "lcs_length_py", "HAVE_COMPILED", "USE_COMPILED"]
