"""Finite-difference model of the 2-D nonlinear diffusion-reaction problem.

    -lap(u) + (xi2/xi1) (exp(xi1 u) - 1) = 100 sin(2 pi x1) sin(2 pi x2)

on the unit square with homogeneous Dirichlet boundary values. The discrete
system is ``G(u; xi) = A u + F(u; xi) + B = 0`` with ``B`` the negated
source, so that both forms of the equation hold literally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels

PRIOR_LOW = 0.01
PRIOR_HIGH = 10.0

# exp(709.78) overflows binary64
EXP_ARG_LIMIT = 700.0


class NonFiniteError(FloatingPointError):
    """A nonlinear term or residual produced a non-finite value."""


@dataclass(frozen=True)
class Grid:
    n_g: int

    def __post_init__(self):
        if int(self.n_g) != self.n_g or self.n_g < 2:
            raise ValueError(f"n_g must be an integer >= 2, got {self.n_g}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_g + 1)

    @property
    def N(self) -> int:
        return self.n_g * self.n_g

    def idx(self, i: int, j: int) -> int:
        """1-based lexicographic index of interior point (i, j); i runs along x1."""
        return (j - 1) * self.n_g + i

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """(x1, x2) of every unknown in storage order."""
        t = np.arange(1, self.n_g + 1) * self.h
        x1 = np.tile(t, self.n_g)
        x2 = np.repeat(t, self.n_g)
        return x1, x2


def build_grid(n_g: int) -> Grid:
    return Grid(n_g)


def in_prior_box(xi) -> bool:
    xi = np.asarray(xi, dtype=float)
    return bool(np.all(np.isfinite(xi)) and np.all(xi >= PRIOR_LOW) and np.all(xi <= PRIOR_HIGH))


def assemble_laplacian(grid: Grid) -> sp.csr_matrix:
    """Scaled 5-point Laplacian (1/h^2)[4, -1, -1, -1, -1] with Dirichlet boundaries."""
    n = grid.n_g
    T = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    eye = sp.identity(n)
    A = (sp.kron(eye, T) + sp.kron(T, eye)) / grid.h**2
    A = sp.csr_matrix(A)
    A.sort_indices()
    A.eliminate_zeros()
    return A


def assemble_source(grid: Grid) -> np.ndarray:
    x1, x2 = grid.coordinates()
    return -100.0 * np.sin(2 * np.pi * x1) * np.sin(2 * np.pi * x2)


def _check_exp_arg(u: np.ndarray, xi1: float) -> np.ndarray:
    arg = xi1 * u
    if not np.all(np.isfinite(arg)) or np.max(arg, initial=-np.inf) > EXP_ARG_LIMIT:
        raise NonFiniteError("exponent argument out of range in nonlinear term")
    return arg


def eval_F(u: np.ndarray, xi) -> np.ndarray:
    """Pointwise nonlinearity (xi2/xi1)(exp(xi1 u) - 1)."""
    xi1, xi2 = float(xi[0]), float(xi[1])
    if xi1 == 0.0:
        raise ValueError("xi1 must be nonzero")
    arg = _check_exp_arg(np.asarray(u, dtype=float), xi1)
    return (xi2 / xi1) * np.expm1(arg)


def eval_JF_diag(u: np.ndarray, xi) -> np.ndarray:
    """Diagonal of dF/du, xi2 exp(xi1 u)."""
    xi1, xi2 = float(xi[0]), float(xi[1])
    if xi1 == 0.0:
        raise ValueError("xi1 must be nonzero")
    arg = _check_exp_arg(np.asarray(u, dtype=float), xi1)
    return xi2 * np.exp(arg)


class FullSystem:
    """G(u; xi) = A u + F(u; xi) + B on a uniform grid.

    ``fevals`` counts residual evaluations and is the only mutable state.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.A = assemble_laplacian(grid)
        self.B = assemble_source(grid)
        self.B.setflags(write=False)
        self.fevals = 0

    @property
    def dim(self) -> int:
        return self.grid.N

    def residual(self, u: np.ndarray, xi) -> np.ndarray:
        self.fevals += 1
        G = _kernels.csr_matvec(self.A, u) + eval_F(u, xi) + self.B
        if not np.all(np.isfinite(G)):
            raise NonFiniteError("non-finite full residual")
        return G

    def jacobian(self, u: np.ndarray, xi) -> sp.csr_matrix:
        return (self.A + sp.diags(eval_JF_diag(u, xi))).tocsr()


class PreconditionedFullSystem:
    """u + M F(u; xi) + M B with M an (approximate) Poisson solver.

    The Jacobian I + M J_F is returned as a linear operator; every product
    costs one Poisson solve.
    """

    def __init__(self, full: FullSystem, poisson):
        self.full = full
        self.M = poisson
        self.MB = poisson.apply(full.B)
        self.MB.setflags(write=False)
        self.fevals = 0

    @property
    def dim(self) -> int:
        return self.full.dim

    def residual(self, u: np.ndarray, xi) -> np.ndarray:
        self.fevals += 1
        R = u + self.M.apply(eval_F(u, xi)) + self.MB
        if not np.all(np.isfinite(R)):
            raise NonFiniteError("non-finite preconditioned residual")
        return R

    def jacobian(self, u: np.ndarray, xi):
        from scipy.sparse.linalg import LinearOperator

        d = eval_JF_diag(u, xi)
        apply = self.M.apply
        return LinearOperator((self.dim, self.dim), matvec=lambda v: v + apply(d * np.ravel(v)), dtype=float)
