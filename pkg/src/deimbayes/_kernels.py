"""Hot inner loops, compiled with numba when available.

Set ``DEIMBAYES_DISABLE_NUMBA=1`` in the environment before import to force
the pure numpy/scipy path. Both paths compute the same quantities; the
benchmark in ``benchmarks/bench_kernels.py`` compares them.
"""
from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get("DEIMBAYES_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def optional_njit(*args, **kwargs):
    def decorator(func):
        if NUMBA_ENABLED:
            return njit(*args, **kwargs)(func)
        return func

    return decorator


@optional_njit(cache=True)
def _csr_matvec_loop(indptr, indices, data, x, y):
    n = indptr.shape[0] - 1
    for i in range(n):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        y[i] = s


@optional_njit(cache=True)
def _gs_sweep_loop(indptr, indices, data, x, b, reverse):
    n = indptr.shape[0] - 1
    for t in range(n):
        i = n - 1 - t if reverse else t
        s = b[i]
        d = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j == i:
                d = data[k]
            else:
                s -= data[k] * x[j]
        x[i] = s / d


@optional_njit(cache=True)
def _acov_loop(xc, maxlag, out):
    n = xc.shape[0]
    for j in range(maxlag + 1):
        s = 0.0
        for t in range(n - j):
            s += xc[t] * xc[t + j]
        out[j] = s / n


def csr_matvec(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    """y = A x for a CSR matrix, by explicit row loop (numba) or scatter-add."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = A.shape[0]
    if NUMBA_ENABLED:
        y = np.empty(n)
        _csr_matvec_loop(A.indptr, A.indices, A.data, x, y)
        return y
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    return np.bincount(rows, weights=A.data * x[A.indices], minlength=n)


def autocovariance(xc: np.ndarray, maxlag: int) -> np.ndarray:
    """Biased (divide-by-n) autocovariance of a mean-centered series, lags 0..maxlag."""
    xc = np.ascontiguousarray(xc, dtype=np.float64)
    n = xc.shape[0]
    if NUMBA_ENABLED:
        out = np.empty(maxlag + 1)
        _acov_loop(xc, maxlag, out)
        return out
    return np.array([xc[: n - j] @ xc[j:] for j in range(maxlag + 1)]) / n


class GaussSeidel:
    """Lexicographic Gauss-Seidel sweeps on a CSR matrix with nonzero diagonal.

    The numpy path solves with the triangular splitting ``(D+L) x = b - U x``,
    which is algebraically the same update as the row loop.
    """

    def __init__(self, A: sp.csr_matrix):
        A = sp.csr_matrix(A)
        A.sort_indices()
        self.A = A
        if not NUMBA_ENABLED:
            self._lower = sp.tril(A, format="csr")
            self._upper = sp.triu(A, format="csr")
            self._strict_upper = sp.triu(A, k=1, format="csr")
            self._strict_lower = sp.tril(A, k=-1, format="csr")

    def forward(self, x: np.ndarray, b: np.ndarray) -> None:
        if NUMBA_ENABLED:
            _gs_sweep_loop(self.A.indptr, self.A.indices, self.A.data, x, b, False)
        else:
            x[:] = spsolve_triangular(self._lower, b - self._strict_upper @ x, lower=True)

    def backward(self, x: np.ndarray, b: np.ndarray) -> None:
        if NUMBA_ENABLED:
            _gs_sweep_loop(self.A.indptr, self.A.indices, self.A.data, x, b, True)
        else:
            x[:] = spsolve_triangular(self._upper, b - self._strict_lower @ x, lower=False)

    def symmetric(self, x: np.ndarray, b: np.ndarray) -> None:
        self.forward(x, b)
        self.backward(x, b)
