"""Anisotropic adaptive finite element solver for 2D diffusion
eigenvalue problems -div(D grad u) = lambda rho u with homogeneous
Dirichlet conditions."""

from .adapt import AdaptConfig, adapt_loop, remesh, transfer_solution
from .eigsolve import EigenSolution, smallest_eigenpairs
from .mesh import Geometry, TriMesh, initial_mesh
from .problems import EigenProblem, get_problem
from .recovery import build_majorant, recover_hessian

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig", "adapt_loop", "remesh", "transfer_solution",
    "EigenSolution", "smallest_eigenpairs", "Geometry", "TriMesh",
    "initial_mesh", "EigenProblem", "get_problem", "build_majorant",
    "recover_hessian", "__version__",
]
