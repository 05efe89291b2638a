"""Sparse and dense linear algebra used by the forward solvers.

GMRES (right-preconditioned, modified Gram-Schmidt with one
reorthogonalization pass), Poisson solvers for the 5-point Laplacian (sparse
LU or geometric multigrid accelerated by CG), a thin SVD and a guarded dense
LU.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float = np.nan):
        super().__init__(msg)
        self.residual = residual


def spmv(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return _kernels.csr_matvec(sp.csr_matrix(A), x)


def _as_matvec(op):
    if op is None:
        return None
    if hasattr(op, "apply"):
        return op.apply
    if hasattr(op, "matvec"):
        return op.matvec
    if callable(op) and not isinstance(op, np.ndarray):
        return op
    return lambda v: op @ v


# ---------------------------------------------------------------- GMRES


@dataclass
class GmresStats:
    iterations: int
    rel_residual: float
    breakdown: bool = False
    converged: bool = True
    history: list = field(default_factory=list)


def gmres(op, b, tol: float = 1e-6, maxit: int = 200, precond=None, x0=None):
    """Solve ``op x = b`` to ``||op x - b|| <= tol ||b||`` without restarts.

    ``op`` and ``precond`` may be arrays, sparse matrices, scipy linear
    operators, objects with ``apply`` or plain callables. Preconditioning is
    applied on the right so the monitored residual is the true one.
    Non-convergence is reported through the stats, not raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = _as_matvec(op)
    Minv = _as_matvec(precond)
    b = np.asarray(b, dtype=float).ravel()
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), GmresStats(0, 0.0, history=[0.0])

    r0 = b - A(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r0)
    history = [beta / bnorm]
    if beta <= tol * bnorm:
        return x, GmresStats(0, beta / bnorm, history=history)

    m = min(maxit, n)
    V = np.zeros((m + 1, n))
    Z = np.zeros((m, n)) if Minv is not None else None
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = r0 / beta
    breakdown = False
    j = 0
    res = beta
    for j in range(m):
        zj = Minv(V[j]) if Minv is not None else V[j]
        if Z is not None:
            Z[j] = zj
        w = np.asarray(A(zj), dtype=float).ravel()
        wnorm0 = np.linalg.norm(w)
        for _ in range(2):
            for i in range(j + 1):
                hij = V[i] @ w
                H[i, j] += hij
                w -= hij * V[i]
        hnext = np.linalg.norm(w)
        H[j + 1, j] = hnext
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        denom = np.hypot(H[j, j], H[j + 1, j])
        if denom == 0.0:
            breakdown = True
            j -= 1
            break
        cs[j] = H[j, j] / denom
        sn[j] = H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        res = abs(g[j + 1])
        history.append(res / bnorm)
        if res <= tol * bnorm:
            break
        if hnext <= 1e-14 * max(wnorm0, 1.0):
            breakdown = True
            break
        V[j + 1] = w / hnext
    k = j + 1
    if k > 0:
        y = sla.solve_triangular(H[:k, :k], g[:k])
        basis = Z[:k] if Z is not None else V[:k]
        x = x + y @ basis
    rel = res / bnorm
    converged = rel <= tol
    if breakdown and converged:
        breakdown = False
    return x, GmresStats(k, rel, breakdown, converged, history)


# ---------------------------------------------------------------- dense


class DenseLU:
    """LU factorization with a pivot-size guard (1e-14 ||K||)."""

    def __init__(self, K: np.ndarray, pivot_tol: float = 1e-14):
        K = np.asarray(K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"square matrix expected, got {K.shape}")
        self.n = K.shape[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is reported below
            self.lu, self.piv = sla.lu_factor(K, check_finite=True)
        scale = np.linalg.norm(K, np.inf)
        pivots = np.abs(np.diag(self.lu))
        if scale == 0.0 or pivots.min() <= pivot_tol * scale:
            raise SingularMatrixError(f"matrix is singular to working precision (min pivot {pivots.min():.3e})")

    def solve(self, rhs, trans: int = 0) -> np.ndarray:
        return sla.lu_solve((self.lu, self.piv), rhs, trans=trans, check_finite=False)


def dense_solve(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return DenseLU(K).solve(rhs)


def thin_svd(S: np.ndarray):
    """Economy SVD ``S = U diag(sigma) W^T``; sigma nonincreasing."""
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    U, sigma, Wt = np.linalg.svd(S, full_matrices=False)
    return U, sigma, Wt.T


# ---------------------------------------------------------------- Poisson


def _interp_1d(n_f: int, n_c: int) -> sp.csr_matrix:
    """Linear interpolation from n_c to n_f interior nodes of a Dirichlet unit interval."""
    x_f = np.arange(1, n_f + 1) / (n_f + 1)
    s = x_f * (n_c + 1)  # position in coarse index units (0 and n_c+1 are boundary)
    left = np.floor(s).astype(int)
    w_right = s - left
    rows, cols, vals = [], [], []
    for i in range(n_f):
        for node, w in ((left[i], 1.0 - w_right[i]), (left[i] + 1, w_right[i])):
            if 1 <= node <= n_c and w > 1e-14:
                rows.append(i)
                cols.append(node - 1)
                vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_f, n_c))


class _Level:
    def __init__(self, A: sp.csr_matrix, n_g: int):
        self.A = sp.csr_matrix(A)
        self.n_g = n_g
        self.smoother = _kernels.GaussSeidel(self.A)
        self.P = None
        self.R = None


class MultigridHierarchy:
    """Geometric grid hierarchy with Galerkin coarse operators, down to n_g <= 3."""

    def __init__(self, A: sp.csr_matrix, n_g: int):
        self.levels = [_Level(A, n_g)]
        while self.levels[-1].n_g > 3:
            fine = self.levels[-1]
            n_c = (fine.n_g - 1) // 2
            P1 = _interp_1d(fine.n_g, n_c)
            P = sp.kron(P1, P1, format="csr")
            fine.P = P
            fine.R = P.T.tocsr()
            Ac = (fine.R @ fine.A @ P).tocsr()
            Ac.sort_indices()
            self.levels.append(_Level(Ac, n_c))
        self._coarse = sla.cho_factor(self.levels[-1].A.toarray())

    def vcycle(self, b: np.ndarray, x0: np.ndarray | None = None, level: int = 0) -> np.ndarray:
        lev = self.levels[level]
        if level == len(self.levels) - 1:
            return sla.cho_solve(self._coarse, b)
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        lev.smoother.symmetric(x, b)
        r = b - _kernels.csr_matvec(lev.A, x)
        ec = self.vcycle(lev.R @ r, None, level + 1)
        x += lev.P @ ec
        lev.smoother.symmetric(x, b)
        return x


def mg_vcycle(hierarchy: MultigridHierarchy, b: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """One V-cycle with one symmetric Gauss-Seidel sweep before and after the correction."""
    return hierarchy.vcycle(np.asarray(b, dtype=float), x0)


class PoissonSolver:
    """Approximate action of A^{-1} for the fixed grid Laplacian.

    ``variant="direct"`` factors A once with sparse LU. ``variant="multigrid"``
    runs CG preconditioned by one V-cycle until ``||A x - b|| <= tol ||b||``.
    """

    def __init__(self, A: sp.csr_matrix, variant: str = "direct", n_g: int | None = None,
                 tol: float = 1e-6, maxiter: int = 200):
        self.A = sp.csr_matrix(A)
        self.variant = variant
        self.tol = tol
        self.maxiter = maxiter
        self.last_iterations = 0
        if variant == "direct":
            self._lu = splu(self.A.tocsc(), permc_spec="MMD_AT_PLUS_A")
        elif variant == "multigrid":
            if n_g is None:
                n_g = int(round(np.sqrt(self.A.shape[0])))
            if n_g * n_g != self.A.shape[0]:
                raise ValueError("multigrid variant needs a square grid")
            self.hierarchy = MultigridHierarchy(self.A, n_g)
        else:
            raise ValueError(f"unknown Poisson solver variant {variant!r}")

    @property
    def shape(self):
        return self.A.shape

    def apply(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.A.shape[0]:
            raise ValueError(f"dimension mismatch: {b.shape[0]} vs {self.A.shape[0]}")
        if self.variant == "direct":
            return self._lu.solve(b)
        if b.ndim == 2:
            return np.column_stack([self._pcg(b[:, j]) for j in range(b.shape[1])])
        return self._pcg(b)

    def _pcg(self, b: np.ndarray) -> np.ndarray:
        bnorm = np.linalg.norm(b)
        x = np.zeros_like(b)
        if bnorm == 0.0:
            self.last_iterations = 0
            return x
        r = b.copy()
        z = self.hierarchy.vcycle(r)
        p = z.copy()
        rz = r @ z
        for it in range(1, self.maxiter + 1):
            Ap = _kernels.csr_matvec(self.A, p)
            alpha = rz / (p @ Ap)
            x += alpha * p
            r -= alpha * Ap
            if np.linalg.norm(r) <= self.tol * bnorm:
                self.last_iterations = it
                return x
            z = self.hierarchy.vcycle(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        res = np.linalg.norm(b - self.A @ x) / bnorm
        raise ConvergenceError(f"multigrid-CG did not reach {self.tol:g} in {self.maxiter} iterations", res)


def poisson_apply(M: PoissonSolver, b: np.ndarray) -> np.ndarray:
    return M.apply(b)
