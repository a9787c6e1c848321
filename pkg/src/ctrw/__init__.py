"""Continuous-time random walk solvers for SDEs.

Weakly approximates SDE solutions by realizable spatial discretizations of
the infinitesimal generator (Markov jump processes), simulated exactly with
the stochastic simulation algorithm.
"""

from .model import SdeProblem, DomainSpec, ReferenceSolution, make_problem
from .mesh import (uniform_mesh_1d, log_mesh_1d, log_mesh_2d, prune,
                   Mesh1D, LogMesh2D, PrunedWindow)
from .generator import (ChannelSet, StepField, SCHEME_IDS, build_generator,
                        lyapunov_drift_ratio)
from .ssa import (RngStream, JumpTrajectory, ssa_step, simulate,
                  estimate_expectation, first_passage, complexity_profile)

__all__ = [
    "SdeProblem", "DomainSpec", "ReferenceSolution", "make_problem",
    "uniform_mesh_1d", "log_mesh_1d", "log_mesh_2d", "prune",
    "Mesh1D", "LogMesh2D", "PrunedWindow",
    "ChannelSet", "StepField", "SCHEME_IDS", "build_generator",
    "lyapunov_drift_ratio",
    "RngStream", "JumpTrajectory", "ssa_step", "simulate",
    "estimate_expectation", "first_passage", "complexity_profile",
]

__version__ = "0.1.0"
