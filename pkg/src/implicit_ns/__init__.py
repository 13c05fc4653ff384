"""Mixed Q2/Q2/Q1 finite elements for steady flow with an implicit constitutive relation."""

from .assembly import Discretization
from .constitutive import ConstitutiveModel
from .manufactured import CaseId, ManufacturedCase
from .mesh import Domain, MeshSpec, build_mesh
from .norms import ErrorTriple, compute_errors, convergence_rate
from .solvers import Algorithm, FlowState, SolverConfig, run, run_fixed_point, run_lions_mercier
from .spaces import build_spaces, interpolate_dirichlet

__all__ = [
    "Algorithm",
    "CaseId",
    "ConstitutiveModel",
    "Discretization",
    "Domain",
    "ErrorTriple",
    "FlowState",
    "ManufacturedCase",
    "MeshSpec",
    "SolverConfig",
    "build_mesh",
    "build_spaces",
    "compute_errors",
    "convergence_rate",
    "interpolate_dirichlet",
    "run",
    "run_fixed_point",
    "run_lions_mercier",
]
