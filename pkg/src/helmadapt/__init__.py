"""Adaptive finite element solver for exterior acoustic scattering.

The package solves the Helmholtz equation outside a sound-hard obstacle.
The unbounded exterior is truncated to a ball and closed with a truncated
Dirichlet-to-Neumann map on the sphere; the interior is discretized with
linear finite elements on an octree tetrahedral mesh that is refined
adaptively from a residual error estimator.
"""

from .adapt import AdaptConfig, ConvergenceHistory, Problem, run
from .assembly import AssembledSystem, DofMap, assemble
from .estimator import choose_truncation, eps_truncation, face_jumps, indicators
from .linsolve import SolveReport, SolverError, solve
from .mesh import HgtForest, LeafMesh, MeshError, SurfaceProjector, build_closure

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig",
    "AssembledSystem",
    "ConvergenceHistory",
    "DofMap",
    "HgtForest",
    "LeafMesh",
    "MeshError",
    "Problem",
    "SolveReport",
    "SolverError",
    "SurfaceProjector",
    "assemble",
    "build_closure",
    "choose_truncation",
    "eps_truncation",
    "face_jumps",
    "indicators",
    "run",
    "solve",
]
