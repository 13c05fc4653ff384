"""Cached solves shared by the slow tests and the acceptance suite."""

from functools import lru_cache

from implicit_ns.cli import solve_level
from implicit_ns.constitutive import ConstitutiveModel
from implicit_ns.manufactured import ManufacturedCase
from implicit_ns.solvers import SolverConfig


@lru_cache(maxsize=None)
def solve(case_id, algorithm, alpha, gamma, tau, level, tol_outer=1e-5):
    """Returns (disc, state, trace, errors) for one level; results are memoized per session."""
    case = ManufacturedCase(case_id, ConstitutiveModel(alpha=alpha, gamma=gamma))
    config = SolverConfig(algorithm=algorithm, tau=tau, tol_outer=tol_outer)
    return solve_level(case, level, config)


def rel(a, b):
    return abs(a - b) / abs(b)
