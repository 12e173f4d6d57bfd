"""Benchmark the compiled kernels against their fallbacks.

    python3 benchmarks/bench_kernels.py

Covers the two hot inner loops: the per-iteration random-walk sweep used by
personalized PageRank (Cython CSR loop vs scipy sparse matvec) and the LCS
table fill used by the subsequence metric (Cython vs pure Python).
"""

from __future__ import annotations

import time

import numpy as np

from cqarag.kernels import HAVE_COMPILED, TransitionMatrix, lcs_length_py

try:
    from cqarag import _kernels
except ImportError:
    _kernels = None


def make_csr(rng: np.random.Generator, n: int, e: int):
    rows = [[] for _ in range(n)]
    for _ in range(e):
        i, j = rng.integers(0, n, size=2)
        rows[int(i)].append((int(j), float(rng.uniform(0.1, 1.0))))
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices, data = [], []
    for i, row in enumerate(rows):
        total = sum(w for _, w in row)
        for j, w in sorted(row):
            indices.append(j)
            data.append(w / total)
        indptr[i + 1] = len(indices)
    return (indptr, np.asarray(indices, dtype=np.int64),
            np.asarray(data, dtype=np.float64))


def best_of(fn, repeats: int = 7) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_sweep():
    rng = np.random.default_rng(0)
    print(f"{'ppr sweep (y = x @ P)':<34}{'fallback':>12}{'compiled':>12}{'speedup':>9}")
    for n, e in [(1_000, 5_000), (4_000, 20_000), (16_000, 80_000), (64_000, 320_000)]:
        indptr, indices, data = make_csr(rng, n, e)
        x = rng.random(n)
        x /= x.sum()
        fallback = TransitionMatrix(indptr, indices, data, n, compiled=False)
        t_fb = best_of(lambda: fallback.sweep(x))
        if HAVE_COMPILED:
            compiled = TransitionMatrix(indptr, indices, data, n, compiled=True)
            t_c = best_of(lambda: compiled.sweep(x))
            assert np.allclose(compiled.sweep(x), fallback.sweep(x), atol=1e-12)
            print(f"  n={n:<7} e={e:<12}{t_fb * 1e3:>10.3f}ms{t_c * 1e3:>10.3f}ms"
                  f"{t_fb / t_c:>8.2f}x")
        else:
            print(f"  n={n:<7} e={e:<12}{t_fb * 1e3:>10.3f}ms{'n/a':>12}{'':>9}")


def bench_lcs():
    rng = np.random.default_rng(1)
    print(f"\n{'lcs length':<34}{'fallback':>12}{'compiled':>12}{'speedup':>9}")
    for size in [64, 256, 1024]:
        a = [int(v) for v in rng.integers(0, 50, size=size)]
        b = [int(v) for v in rng.integers(0, 50, size=size)]
        t_py = best_of(lambda: lcs_length_py(a, b), repeats=3)
        if HAVE_COMPILED:
            arr_a = np.asarray(a, dtype=np.int64)
            arr_b = np.asarray(b, dtype=np.int64)
            t_c = best_of(lambda: _kernels.lcs_length(arr_a, arr_b), repeats=3)
            assert _kernels.lcs_length(arr_a, arr_b) == lcs_length_py(a, b)
            print(f"  tokens={size:<20}{t_py * 1e3:>10.3f}ms{t_c * 1e3:>10.3f}ms"
                  f"{t_py / t_c:>8.2f}x")
        else:
            print(f"  tokens={size:<20}{t_py * 1e3:>10.3f}ms{'n/a':>12}{'':>9}")


if __name__ == "__main__":
    print(f"compiled extension available: {HAVE_COMPILED}\n")
    bench_sweep()
    bench_lcs()
