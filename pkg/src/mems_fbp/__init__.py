"""Solvers for the free-boundary MEMS model and its small-aspect-ratio limit.

The membrane displacement u on (-1, 1) obeys u_t - u_xx = -lambda g_eps(u),
where g_eps comes from an elliptic problem for the potential on the region
between the plate and the membrane, mapped to a fixed rectangle.
"""
__version__ = "0.1.0"

from .errors import DegenerateDomainError, InsufficientDataError, InvalidGridError, MemsError, SolverFailure
from .grid import Field1D, Field2D, Grid1D, Grid2D, diff1, diff2, integrate1, integrate2
from .elliptic import (
    MembraneProfile,
    PotentialSolve,
    g_eps,
    g_small_aspect,
    membrane,
    reconstruct_psi,
    solve_potential,
    trace_deta,
)
from .evolution import EvolutionConfig, Trajectory, compare_limit, evolve_fbp, evolve_small_aspect
from .steady import SteadyState, continuation, decay_rate, steady_fixed_point, steady_newton
from .diagnostics import BlowupParams, certificate, lambda_star

__all__ = [
    "__version__",
    "DegenerateDomainError",
    "InsufficientDataError",
    "InvalidGridError",
    "MemsError",
    "SolverFailure",
    "Field1D",
    "Field2D",
    "Grid1D",
    "Grid2D",
    "diff1",
    "diff2",
    "integrate1",
    "integrate2",
    "MembraneProfile",
    "PotentialSolve",
    "g_eps",
    "g_small_aspect",
    "membrane",
    "reconstruct_psi",
    "solve_potential",
    "trace_deta",
    "EvolutionConfig",
    "Trajectory",
    "compare_limit",
    "evolve_fbp",
    "evolve_small_aspect",
    "SteadyState",
    "continuation",
    "decay_rate",
    "steady_fixed_point",
    "steady_newton",
    "BlowupParams",
    "certificate",
    "lambda_star",
]
