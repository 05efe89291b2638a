"""Bayesian inversion for (xi1, xi2) with an adaptive Metropolis-Hastings sampler.

Uniform prior on [0.01, 10]^2, Gaussian noise with standard deviation sigma,
observation operator C = I. Proposals are lognormal: a Gaussian random walk
in log(xi) whose covariance is re-estimated from the log-history of the chain
every ``stride`` samples.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .model import PRIOR_HIGH, PRIOR_LOW, FullSystem, PreconditionedFullSystem, in_prior_box
from .newton import ForcingConfig, newton_solve

log = logging.getLogger(__name__)

RNG_NAME = "numpy.random.PCG64"
STREAM_DATA = 0
STREAM_PROPOSAL = 1
STREAM_ACCEPT = 2
STREAM_SAMPLING = 3

DEFAULT_X0 = (float(np.sqrt(PRIOR_LOW * PRIOR_HIGH)),) * 2


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for one module stream: PCG64 seeded with ``seed XOR stream``."""
    return np.random.Generator(np.random.PCG64((int(seed) ^ int(stream)) & 0xFFFFFFFFFFFFFFFF))


class ForwardFailure(RuntimeError):
    pass


class FullForward:
    """Parameter-to-observable map through the preconditioned full model."""

    name = "full"

    def __init__(self, full: FullSystem, M, cfg: ForcingConfig | None = None):
        self.full = full
        self.system = PreconditionedFullSystem(full, M)
        self.cfg = cfg or ForcingConfig()
        self.calls = 0

    def __call__(self, xi) -> np.ndarray:
        self.calls += 1
        u, rep = newton_solve(self.system, np.zeros(self.full.dim), xi, self.cfg)
        if not rep.converged:
            raise ForwardFailure(f"full solve failed at xi={tuple(xi)}: {rep.message}")
        return u


class DeimForward:
    """Parameter-to-observable map through a reduced model, lifted by Q."""

    name = "deim"

    def __init__(self, reduced, cfg: ForcingConfig | None = None, preconditioned: bool | None = None):
        self.reduced = reduced
        self.cfg = cfg or ForcingConfig()
        self.preconditioned = preconditioned
        self.calls = 0
        self._proj = None

    def solve_reduced(self, xi) -> np.ndarray:
        self.calls += 1
        u_r, rep = self.reduced.solve(xi, self.cfg, preconditioned=self.preconditioned)
        if not rep.converged:
            raise ForwardFailure(f"reduced solve failed at xi={tuple(xi)}: {rep.message}")
        return u_r

    def __call__(self, xi) -> np.ndarray:
        return self.reduced.Q @ self.solve_reduced(xi)

    def squared_misfit(self, xi, y_obs: np.ndarray) -> float:
        """||y_obs - Q u_r||^2 without lifting to R^N.

        With orthonormal Q this equals ||(I - QQ^T) y_obs||^2 + ||Q^T y_obs - u_r||^2;
        the first term is computed once per data vector.
        """
        if self._proj is None or self._proj[0] is not y_obs:
            Q = self.reduced.Q
            if np.abs(Q.T @ Q - np.eye(Q.shape[1])).max() > 1e-10:
                self._proj = (y_obs, None, None)
            else:
                c = Q.T @ y_obs
                perp = y_obs - Q @ c
                self._proj = (y_obs, c, float(perp @ perp))
        _, c, perp = self._proj
        if c is None:
            r = y_obs - self(xi)
            return float(r @ r)
        d = c - self.solve_reduced(xi)
        return perp + float(d @ d)


def synthesize_data(forward, xi_true=(1.0, 0.1), sigma: float = 1e-2, seed: int = 0) -> np.ndarray:
    """y_obs = y(xi_true) + sigma z with z standard normal from the data stream."""
    y = forward(xi_true)
    z = make_rng(seed, STREAM_DATA).standard_normal(y.shape[0])
    return y + sigma * z


@dataclass
class Posterior:
    y_obs: np.ndarray
    sigma: float
    forward: object
    forward_solves: int = 0
    forward_failures: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        self.y_obs = np.asarray(self.y_obs, dtype=float)

    def log_density(self, xi) -> float:
        if not in_prior_box(xi):
            return -np.inf
        self.forward_solves += 1
        xi = np.asarray(xi, dtype=float)
        misfit = getattr(self.forward, "squared_misfit", None)
        try:
            if misfit is not None:
                sq = misfit(xi, self.y_obs)
            else:
                r = self.y_obs - self.forward(xi)
                sq = float(r @ r)
        except (ForwardFailure, FloatingPointError) as exc:
            self.forward_failures += 1
            log.warning("forward failure treated as zero likelihood: %s", exc)
            return -np.inf
        return -sq / (2.0 * self.sigma**2)


def log_posterior(post: Posterior, xi) -> float:
    return post.log_density(xi)


@dataclass
class ProposalState:
    gamma: np.ndarray
    epsilon: float = 1e-8
    stride: int = 100
    chol: np.ndarray = field(init=False)

    def __post_init__(self):
        self.set(self.gamma)

    def set(self, gamma: np.ndarray) -> None:
        self.gamma = np.asarray(gamma, dtype=float)
        self.chol = np.linalg.cholesky(self.gamma)


def update_covariance(history, epsilon: float = 1e-8) -> np.ndarray:
    """Mean-centered sample covariance (divide by count) of log-samples, plus epsilon I."""
    X = np.log(np.asarray(history, dtype=float))
    if X.ndim != 2 or X.shape[0] < 2:
        return np.eye(2 if X.ndim != 2 else X.shape[1])
    D = X - X.mean(axis=0)
    C = D.T @ D / X.shape[0]
    return 0.5 * (C + C.T) + epsilon * np.eye(X.shape[1])


def propose(current, state: ProposalState, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(len(current))
    return np.exp(np.log(np.asarray(current, dtype=float)) + state.chol @ z)


def accept_step(log_post_star: float, log_post_curr: float, rng: np.random.Generator,
                log_correction: float = 0.0) -> bool:
    theta = rng.random()
    if log_post_star == -np.inf:
        return False
    with np.errstate(divide="ignore"):
        return bool(np.log(theta) < log_post_star - log_post_curr + log_correction)


@dataclass
class Chain:
    samples: np.ndarray
    log_post: np.ndarray
    accepted: np.ndarray
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def acceptance_rate(self) -> float:
        if len(self) < 2:
            return float("nan")
        return float(np.mean(self.accepted[1:]))

    @property
    def first_iter(self) -> int:
        return int(self.config.get("first_iter", 0))


def run_chain(post: Posterior, M: int, x0=DEFAULT_X0, stride: int = 100, seed: int = 0,
              epsilon: float = 1e-8, jacobian_correction: bool = False, scale: float = 1.0,
              progress=None) -> Chain:
    """Adaptive MH: lognormal random walk with covariance refreshed every ``stride`` samples.

    The initial proposal covariance is the identity (in log space); ``scale``
    multiplies the estimated covariance. Proposals outside the prior box are
    rejected without a forward solve.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    x0 = np.asarray(x0, dtype=float)
    if not in_prior_box(x0):
        raise ValueError(f"x0={x0} lies outside the prior box")
    prop_rng = make_rng(seed, STREAM_PROPOSAL)
    acc_rng = make_rng(seed, STREAM_ACCEPT)
    d = x0.shape[0]
    samples = np.empty((M, d))
    lps = np.empty(M)
    accepted = np.zeros(M, dtype=bool)
    state = ProposalState(np.eye(d), epsilon, stride)
    t0 = time.perf_counter()
    solves0 = post.forward_solves

    samples[0] = x0
    lps[0] = post.log_density(x0)
    if not np.isfinite(lps[0]):
        raise ForwardFailure(f"log-posterior at x0={x0} is not finite")
    accepted[0] = True
    for i in range(1, M):
        if (i % stride) == 0:
            state.set(scale * update_covariance(samples[:i], epsilon))
        cur = samples[i - 1]
        star = propose(cur, state, prop_rng)
        lp_star = post.log_density(star)
        corr = float(np.sum(np.log(star) - np.log(cur))) if jacobian_correction else 0.0
        if accept_step(lp_star, lps[i - 1], acc_rng, corr):
            samples[i] = star
            lps[i] = lp_star
            accepted[i] = True
        else:
            samples[i] = cur
            lps[i] = lps[i - 1]
        if progress is not None and i % 1000 == 0:
            progress(i)
    config = {
        "M": M, "x0": tuple(map(float, x0)), "stride": stride, "seed": seed, "epsilon": epsilon,
        "jacobian_correction": jacobian_correction, "scale": scale, "rng": RNG_NAME,
        "forward": getattr(post.forward, "name", type(post.forward).__name__),
        "forward_solves": post.forward_solves - solves0, "wall_time": time.perf_counter() - t0,
        "first_iter": 0,
    }
    return Chain(samples, lps, accepted, config)
