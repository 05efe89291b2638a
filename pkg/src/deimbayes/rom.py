"""POD-Galerkin and POD-DEIM reduced models of the full system.

Offline: POD bases from solution snapshots, a DEIM basis and interpolation
indices from nonlinear-term snapshots, and the parameter-independent reduced
operators (including the Poisson-preconditioned ones). Online: residuals and
Jacobians whose cost does not depend on N, driven by ``newton.newton_solve``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .linsolve import DenseLU, SingularMatrixError, thin_svd
from .model import PRIOR_HIGH, PRIOR_LOW, FullSystem, NonFiniteError, PreconditionedFullSystem, eval_F, eval_JF_diag
from .newton import ForcingConfig, newton_solve

log = logging.getLogger(__name__)

REDUCED_TOL_FACTOR = 1e-2


@dataclass
class PodBasis:
    Q: np.ndarray
    sigma: np.ndarray

    @property
    def k(self) -> int:
        return self.Q.shape[1]


def numerical_rank(sigma: np.ndarray, shape, rtol: float | None = None) -> int:
    """Count of singular values above ``rtol * sigma_max``.

    The default ``rtol`` is ``max(shape) * eps``; ``rtol=0`` counts every
    nonzero singular value.
    """
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    if rtol is None:
        rtol = max(shape) * np.finfo(float).eps
    return int(np.sum(sigma > rtol * sigma[0]))


def pod_basis(S: np.ndarray, k: int, rtol: float | None = None, svd=None) -> PodBasis:
    """First ``k`` left singular vectors of the snapshot matrix.

    Raises if ``k`` exceeds the numerical rank at tolerance ``rtol`` (see
    ``numerical_rank``). ``svd`` may pass a precomputed ``thin_svd(S)``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if k < 1 or k > min(S.shape):
        raise ValueError(f"k={k} must lie in [1, {min(S.shape)}]")
    U, sigma, _ = thin_svd(S) if svd is None else svd
    rank = numerical_rank(sigma, S.shape, rtol)
    if k > rank:
        raise ValueError(f"k={k} exceeds the numerical rank {rank} of the snapshot matrix")
    return PodBasis(np.ascontiguousarray(U[:, :k]), sigma.copy())


def deim_points(V: np.ndarray) -> np.ndarray:
    """Greedy DEIM interpolation indices (0-based); ties go to the lowest index."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    n = V.shape[1]
    p = np.empty(n, dtype=np.int64)
    scale = np.abs(V[:, 0]).max()
    if scale == 0.0:
        raise SingularMatrixError("DEIM step 1: first basis vector is zero")
    p[0] = int(np.argmax(np.abs(V[:, 0])))
    for i in range(1, n):
        v = V[:, i]
        c = np.linalg.solve(V[p[:i], :i], v[p[:i]])
        r = v - V[:, :i] @ c
        ar = np.abs(r)
        j = int(np.argmax(ar))
        if ar[j] <= 1e-13 * max(np.abs(v).max(), 1e-300):
            raise SingularMatrixError(f"DEIM step {i + 1}: zero residual, basis columns are linearly dependent")
        p[i] = j
    return p


@dataclass
class DeimInterpolant:
    V: np.ndarray
    p: np.ndarray
    lu: DenseLU = field(repr=False)

    @classmethod
    def from_basis(cls, V: np.ndarray, p: np.ndarray | None = None) -> "DeimInterpolant":
        V = np.ascontiguousarray(np.asarray(V, dtype=float))
        if p is None:
            p = deim_points(V)
        p = np.asarray(p, dtype=np.int64)
        if len(np.unique(p)) != len(p):
            raise ValueError("DEIM indices must be distinct")
        return cls(V, p, DenseLU(V[p, :]))

    @property
    def n(self) -> int:
        return self.V.shape[1]

    def interpolation_matrix(self) -> np.ndarray:
        """V (P^T V)^{-1}, N x n."""
        return self.lu.solve(self.V.T, trans=1).T


def deim_apply(interp: DeimInterpolant, f_samples: np.ndarray) -> np.ndarray:
    return interp.V @ interp.lu.solve(np.asarray(f_samples, dtype=float))


@dataclass
class ReducedSystem:
    """Parameter-independent blocks of the (preconditioned) DEIM system."""

    A_r: np.ndarray
    B_r: np.ndarray
    E: np.ndarray
    Q_P: np.ndarray
    E_M: np.ndarray | None = None
    MB_r: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.A_r.shape[0]

    @property
    def n(self) -> int:
        return self.E.shape[1]

    @property
    def preconditioned_available(self) -> bool:
        return self.E_M is not None


def build_reduced_system(Q: np.ndarray, interp: DeimInterpolant, A, B: np.ndarray, M=None) -> ReducedSystem:
    Q = np.asarray(Q, dtype=float)
    W = interp.interpolation_matrix()
    AQ = A @ Q
    A_r = Q.T @ AQ
    A_r = 0.5 * (A_r + A_r.T)
    E = Q.T @ W
    Q_P = np.ascontiguousarray(Q[interp.p, :])
    E_M = MB_r = None
    if M is not None:
        MW = np.empty_like(W)
        for j in range(W.shape[1]):
            try:
                MW[:, j] = M.apply(W[:, j])
            except Exception as exc:
                raise RuntimeError(f"Poisson solve failed for interpolation column {j}") from exc
        E_M = Q.T @ MW
        MB_r = Q.T @ M.apply(B)
    rs = ReducedSystem(A_r, Q.T @ B, E, Q_P, E_M, MB_r)
    for name in ("A_r", "B_r", "E", "Q_P", "E_M", "MB_r"):
        arr = getattr(rs, name)
        if arr is not None:
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"reduced block {name} is not finite")
            arr.setflags(write=False)
    return rs


def reduced_residual(rs: ReducedSystem, u_r: np.ndarray, xi, preconditioned: bool) -> np.ndarray:
    F_p = eval_F(rs.Q_P @ u_r, xi)
    if preconditioned:
        return u_r + rs.E_M @ F_p + rs.MB_r
    return rs.A_r @ u_r + rs.E @ F_p + rs.B_r


def reduced_jacobian(rs: ReducedSystem, u_r: np.ndarray, xi, preconditioned: bool) -> np.ndarray:
    d = eval_JF_diag(rs.Q_P @ u_r, xi)
    if preconditioned:
        return np.eye(rs.k) + (rs.E_M * d) @ rs.Q_P
    return rs.A_r + (rs.E * d) @ rs.Q_P


class DeimSystem:
    """Nonlinear-system view of the DEIM model for the Newton driver."""

    def __init__(self, rs: ReducedSystem, preconditioned: bool = True):
        if preconditioned and not rs.preconditioned_available:
            raise ValueError("reduced system was built without a Poisson solver")
        self.rs = rs
        self.preconditioned = preconditioned
        self.fevals = 0

    @property
    def dim(self) -> int:
        return self.rs.k

    def residual(self, u_r, xi):
        self.fevals += 1
        R = reduced_residual(self.rs, u_r, xi, self.preconditioned)
        if not np.all(np.isfinite(R)):
            raise NonFiniteError("non-finite reduced residual")
        return R

    def jacobian(self, u_r, xi):
        return reduced_jacobian(self.rs, u_r, xi, self.preconditioned)


def pod_galerkin_residual(Q, A_r, B_r, u_r, xi) -> np.ndarray:
    return A_r @ u_r + Q.T @ eval_F(Q @ u_r, xi) + B_r


class PodGalerkinSystem:
    """POD-Galerkin model without hyper-reduction; every evaluation costs O(N k)."""

    def __init__(self, Q: np.ndarray, A, B: np.ndarray):
        self.Q = np.asarray(Q, dtype=float)
        A_r = self.Q.T @ (A @ self.Q)
        self.A_r = 0.5 * (A_r + A_r.T)
        self.B_r = self.Q.T @ B
        self.fevals = 0

    @property
    def dim(self) -> int:
        return self.Q.shape[1]

    def residual(self, u_r, xi):
        self.fevals += 1
        return pod_galerkin_residual(self.Q, self.A_r, self.B_r, u_r, xi)

    def jacobian(self, u_r, xi):
        d = eval_JF_diag(self.Q @ u_r, xi)
        return self.A_r + self.Q.T @ (self.Q * d[:, None])


def error_indicator(Q: np.ndarray, u_r: np.ndarray, xi, full: FullSystem) -> float:
    """||G(Q u_r; xi)|| / ||B|| from one full residual evaluation."""
    try:
        G = full.residual(Q @ u_r, xi)
    except NonFiniteError:
        return np.inf
    return float(np.linalg.norm(G) / np.linalg.norm(full.B))


class ReducedModel:
    """POD basis + DEIM interpolant + reduced operators, ready for online solves."""

    def __init__(self, basis: PodBasis, interp: DeimInterpolant, full: FullSystem, M=None):
        self.basis = basis
        self.interp = interp
        self.system = build_reduced_system(basis.Q, interp, full.A, full.B, M)

    @property
    def Q(self) -> np.ndarray:
        return self.basis.Q

    @property
    def k(self) -> int:
        return self.basis.k

    def solve(self, xi, cfg: ForcingConfig | None = None, preconditioned: bool | None = None,
              linear: str | None = None, jacobian: str = "explicit", max_outer: int = 50):
        """Reduced Newton solve from u_r = 0 to the reduced tolerance (1e-2 of the full one)."""
        cfg = (cfg or ForcingConfig()).scaled(REDUCED_TOL_FACTOR)
        if preconditioned is None:
            preconditioned = self.system.preconditioned_available
        if linear is None:
            linear = "gmres" if preconditioned else "direct"
        sysw = DeimSystem(self.system, preconditioned)
        return newton_solve(sysw, np.zeros(self.k), xi, cfg, linear=linear, jacobian=jacobian,
                            max_outer=max_outer)


def truncate(S_U: np.ndarray, S_F: np.ndarray, k: int, n: int | None = None, rtol: float | None = None,
             svds=(None, None)):
    """POD basis of size k and DEIM interpolant of size n from snapshot matrices."""
    n = k if n is None else n
    basis = pod_basis(S_U, k, rtol, svds[0])
    Vb = pod_basis(S_F, n, rtol, svds[1])
    return basis, DeimInterpolant.from_basis(Vb.Q)


def solve_full(full: FullSystem, M, xi, cfg: ForcingConfig | None = None, **kw):
    """Preconditioned full Newton solve u + M F(u) + M B = 0 from u = 0."""
    psys = kw.pop("psys", None) or PreconditionedFullSystem(full, M)
    return newton_solve(psys, np.zeros(full.dim), xi, cfg or ForcingConfig(), **kw)


@dataclass
class SnapshotSet:
    S_U: np.ndarray
    S_F: np.ndarray
    params: np.ndarray

    @property
    def count(self) -> int:
        return self.S_U.shape[1]


@dataclass
class Acquisition:
    snapshots: SnapshotSet
    basis: PodBasis
    interp: DeimInterpolant
    indicators: np.ndarray
    accepted: np.ndarray
    trial_params: np.ndarray
    skipped: int = 0
    seconds: float = 0.0


def trial_parameters(n_trial: int, sampling: str = "random", rng=None) -> np.ndarray:
    """n_trial points in the prior box: uniform random, or a tensor grid (n_trial a perfect square)."""
    if sampling == "random":
        rng = rng if rng is not None else np.random.default_rng()
        return rng.uniform(PRIOR_LOW, PRIOR_HIGH, size=(n_trial, 2))
    if sampling == "grid":
        m = int(round(np.sqrt(n_trial)))
        if m * m != n_trial:
            raise ValueError("grid sampling needs a square n_trial")
        t = np.linspace(PRIOR_LOW, PRIOR_HIGH, m)
        a, b = np.meshgrid(t, t, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])
    raise ValueError(f"unknown sampling {sampling!r}")


INIT_PARAMETER = (np.sqrt(PRIOR_LOW * PRIOR_HIGH), np.sqrt(PRIOR_LOW * PRIOR_HIGH))


def acquire_snapshots(full: FullSystem, M, n_trial: int, tau_d: float = 1e-4, rng=None,
                      sampling: str = "random", params=None, cfg: ForcingConfig | None = None,
                      xi_init=INIT_PARAMETER) -> Acquisition:
    """Random-sampling snapshot acquisition.

    Bases start from one full solve at ``xi_init``. For each trial parameter
    the current DEIM model (k = n = number of snapshots) is solved; if the
    error indicator exceeds ``tau_d`` the full model is solved there and both
    snapshot matrices grow by one column.
    """
    if n_trial < 1:
        raise ValueError("n_trial must be >= 1")
    cfg = cfg or ForcingConfig()
    t0 = time.perf_counter()
    if params is None:
        params = trial_parameters(n_trial, sampling, rng)
    params = np.asarray(params, dtype=float)
    psys = PreconditionedFullSystem(full, M)

    u, rep = solve_full(full, M, xi_init, cfg, psys=psys)
    if not rep.converged:
        raise RuntimeError(f"initial full solve failed at {xi_init}: {rep.message}")
    U_cols = [u]
    F_cols = [eval_F(u, xi_init)]
    P_rows = [tuple(xi_init)]
    indicators = np.full(len(params), np.nan)
    accepted = np.zeros(len(params), dtype=bool)
    skipped = 0
    model = None

    def rebuild():
        S_U = np.column_stack(U_cols)
        S_F = np.column_stack(F_cols)
        return ReducedModel(*_full_rank_truncation(S_U, S_F), full, None)

    for t, xi in enumerate(params):
        eta = np.inf
        if tau_d > 0:
            if model is None:
                model = rebuild()
            u_r, rrep = model.solve(xi, cfg)
            eta = error_indicator(model.Q, u_r, xi, full) if rrep.converged else np.inf
        indicators[t] = eta
        if eta <= tau_d:
            continue
        u, rep = solve_full(full, M, xi, cfg, psys=psys)
        if not rep.converged:
            skipped += 1
            log.warning("full solve failed at xi=%s (%s); sample skipped", xi, rep.message)
            continue
        U_cols.append(u)
        F_cols.append(eval_F(u, xi))
        P_rows.append(tuple(xi))
        accepted[t] = True
        model = None

    snaps = SnapshotSet(np.column_stack(U_cols), np.column_stack(F_cols), np.array(P_rows))
    basis, interp = _full_rank_truncation(snaps.S_U, snaps.S_F)
    return Acquisition(snaps, basis, interp, indicators, accepted, params, skipped, time.perf_counter() - t0)


def _full_rank_truncation(S_U, S_F):
    """k = n = the smaller numerical rank of the two snapshot matrices."""
    svd_u = thin_svd(S_U)
    svd_f = thin_svd(S_F)
    k = max(min(numerical_rank(svd_u[1], S_U.shape), numerical_rank(svd_f[1], S_F.shape)), 1)
    return truncate(S_U, S_F, k, svds=(svd_u, svd_f))
