"""Bayesian inversion of a nonlinear elliptic PDE accelerated by a preconditioned POD-DEIM reduced model."""
from .bayes import Chain, DeimForward, FullForward, Posterior, run_chain, synthesize_data
from .diagnostics import diagnose, geweke, iact
from .linsolve import PoissonSolver, gmres
from .model import FullSystem, PreconditionedFullSystem, build_grid
from .newton import ForcingConfig, newton_solve
from .rom import DeimInterpolant, ReducedModel, acquire_snapshots, deim_points, pod_basis

__version__ = "0.1.0"

__all__ = [
    "Chain", "DeimForward", "DeimInterpolant", "ForcingConfig", "FullForward", "FullSystem", "PoissonSolver",
    "Posterior", "PreconditionedFullSystem", "ReducedModel", "acquire_snapshots", "build_grid", "deim_points",
    "diagnose", "geweke", "gmres", "iact", "newton_solve", "pod_basis", "run_chain", "synthesize_data",
]
