"""Inexact Newton-GMRES with safeguarded adaptive forcing terms.

Works on any object exposing ``residual(u, xi)``, ``jacobian(u, xi)`` and a
``fevals`` counter (see ``model.FullSystem``). The Jacobian may be a dense
array, a sparse matrix or a linear operator. With ``jacobian="fd"`` the
Jacobian is never formed: each GMRES product is a forward difference of the
residual and therefore costs one function evaluation.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, spsolve

from .linsolve import DenseLU, SingularMatrixError, gmres
from .model import NonFiniteError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForcingConfig:
    gamma: float = 0.9
    eta_max: float = 0.25
    tau_a: float = 1e-6
    tau_b: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.eta_max < 1.0:
            raise ValueError("eta_max must lie in (0, 1)")
        if self.tau_a <= 0 or self.tau_b <= 0:
            raise ValueError("tau_a and tau_b must be positive")

    def scaled(self, factor: float) -> "ForcingConfig":
        """Same forcing with both stopping tolerances multiplied by ``factor``."""
        return ForcingConfig(self.gamma, self.eta_max, self.tau_a * factor, self.tau_b * factor)


@dataclass
class NewtonReport:
    outer_iterations: int = 0
    function_evals: int = 0
    inner_iterations: list = field(default_factory=list)
    initial_residual: float = np.nan
    final_residual: float = np.nan
    tau: float = np.nan
    converged: bool = False
    jacobian_mode: str = "explicit"
    linear: str = "gmres"
    history: list = field(default_factory=list)  # (outer_iter, fe_total, residual_norm)
    message: str = ""

    @property
    def fe_with_inner(self) -> int:
        """Function evaluations counted as a matrix-free solver would count them.

        Every Krylov product is charged one evaluation of G, as with
        finite-difference directional derivatives. Equal to ``function_evals``
        in ``fd`` mode.
        """
        if self.jacobian_mode == "fd":
            return self.function_evals
        return self.function_evals + int(sum(self.inner_iterations))

    @property
    def relative_residual(self) -> float:
        return self.final_residual / self.initial_residual if self.initial_residual > 0 else 0.0

    def write_history_csv(self, path, fe_convention: str = "with_inner") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["outer_iter", "fe", "residual_norm"])
            for it, fe, fe_inner, res in self.history:
                w.writerow([it, fe_inner if fe_convention == "with_inner" else fe, repr(float(res))])


def forcing_term(i: int, eta_prev: float, normG_i: float, normG_prev: float, tau: float,
                 cfg: ForcingConfig) -> float:
    if normG_i == 0.0:
        return cfg.eta_max
    if i == 0:
        eta_safe = cfg.eta_max
    else:
        eta_res = cfg.gamma * normG_i / normG_prev
        carry = cfg.gamma * eta_prev**2
        if carry <= 0.1:
            eta_safe = min(cfg.eta_max, eta_res)
        else:
            eta_safe = min(cfg.eta_max, max(eta_res, carry))
    return min(cfg.eta_max, max(eta_safe, 0.5 * tau / normG_i))


class _FDJacobian(LinearOperator):
    """Forward-difference directional derivatives of the residual at u."""

    def __init__(self, system, u, xi, G):
        super().__init__(float, (u.shape[0], u.shape[0]))
        self.system, self.u, self.xi, self.G = system, u, xi, G
        self.unorm = np.linalg.norm(u)

    def _matvec(self, v):
        v = np.ravel(v)
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            return np.zeros_like(v)
        h = np.sqrt(np.finfo(float).eps) * max(self.unorm, 1.0) / vnorm
        return (self.system.residual(self.u + h * v, self.xi) - self.G) / h


def _linear_solve(J, rhs, eta, linear, precond, maxit):
    if linear == "gmres":
        z, stats = gmres(J, rhs, tol=eta, maxit=maxit, precond=precond)
        if stats.breakdown:
            raise RuntimeError("GMRES breakdown")
        return z, stats.iterations
    if linear == "direct":
        if sp.issparse(J):
            return spsolve(J.tocsc(), rhs), 0
        if isinstance(J, np.ndarray):
            return DenseLU(J).solve(rhs), 0
        raise TypeError("direct linear solves need an explicit Jacobian")
    raise ValueError(f"unknown linear solver {linear!r}")


def newton_solve(system, u0, xi=None, cfg: ForcingConfig | None = None, linear: str = "gmres",
                 precond=None, max_outer: int = 50, jacobian: str = "explicit", gmres_maxit: int = 200):
    """Inexact Newton with full steps, stopping when ``||G(u)|| <= tau_a + tau_b ||G(u0)||``.

    Returns ``(u, NewtonReport)``; failures are reported with
    ``converged=False`` rather than raised. A step that produces a non-finite
    residual is retried once with half the update.
    """
    cfg = cfg or ForcingConfig()
    if jacobian not in ("explicit", "fd"):
        raise ValueError(f"unknown jacobian mode {jacobian!r}")
    rep = NewtonReport(jacobian_mode=jacobian, linear=linear)
    start = system.fevals
    u = np.array(u0, dtype=float)

    def fe():
        return system.fevals - start

    try:
        G = system.residual(u, xi)
    except NonFiniteError as exc:
        rep.message = f"initial residual not finite: {exc}"
        rep.function_evals = fe()
        return u, rep
    norm = np.linalg.norm(G)
    rep.initial_residual = norm
    tau = cfg.tau_a + cfg.tau_b * norm
    rep.tau = tau
    rep.history.append((0, fe(), fe(), norm))
    eta = cfg.eta_max
    norm_prev = norm
    i = 0
    while norm > tau:
        if i >= max_outer:
            rep.message = f"no convergence in {max_outer} outer iterations"
            break
        eta = forcing_term(i, eta, norm, norm_prev, tau, cfg)
        try:
            J = _FDJacobian(system, u, xi, G) if jacobian == "fd" else system.jacobian(u, xi)
            z, inner = _linear_solve(J, -G, eta, linear, precond, gmres_maxit)
        except (NonFiniteError, SingularMatrixError, RuntimeError) as exc:
            rep.message = f"linear solve failed at outer iteration {i}: {exc}"
            break
        rep.inner_iterations.append(inner)
        try:
            u_new = u + z
            G_new = system.residual(u_new, xi)
        except NonFiniteError:
            try:
                u_new = u + 0.5 * z
                G_new = system.residual(u_new, xi)
            except NonFiniteError as exc:
                rep.message = f"non-finite residual after half step at outer iteration {i}: {exc}"
                break
        u, G = u_new, G_new
        norm_prev, norm = norm, np.linalg.norm(G)
        i += 1
        rep.history.append((i, fe(), fe() + (0 if jacobian == "fd" else sum(rep.inner_iterations)), norm))
        if not np.isfinite(norm):
            rep.message = "non-finite residual norm"
            break
    rep.outer_iterations = i
    rep.function_evals = fe()
    rep.final_residual = norm
    rep.converged = bool(norm <= tau)
    if not rep.converged:
        log.debug("newton failed: %s", rep.message)
    return u, rep
