"""Navier-Stokes Newton solver with a Schur-complement inner solve, and the two outer iterations.

Outer iterations alternate between a velocity-pressure solve with a lagged
stress load and element-local stress updates:

* ``run_lions_mercier``: Peaceman-Rachford type splitting with pseudo-time
  step ``tau`` (monotone half-step, then Navier-Stokes + linear stress step);
* ``run_fixed_point``: Navier-Stokes with the previous stress, then the full
  monotone stress relation.

Both stop when the relative combined increment of (T, u, p) drops below
``tol_outer``.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import constitutive as cst
from .assembly import Discretization
from .linalg import KrylovReport, cg, factorize, gmres

logger = logging.getLogger(__name__)


class Algorithm(enum.Enum):
    LIONS_MERCIER = "lions-mercier"
    FIXED_POINT = "fixed-point"


@dataclass
class SolverConfig:
    algorithm: Algorithm = Algorithm.LIONS_MERCIER
    tau: float = 0.5
    tol_outer: float = 1e-5
    tol_newton: float = 1e-6
    krylov_rel_tol: float = 1e-6
    local_tol: float = 1e-6
    max_outer: int = 500
    max_newton: int = 25
    max_krylov: int = 1000
    gmres_restart: int = 100

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        for name in ("tau", "tol_outer", "tol_newton", "krylov_rel_tol", "local_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FlowState:
    T: np.ndarray  # (n_T,) element stress coefficients
    u: np.ndarray  # (n_u,) including boundary values
    p: np.ndarray  # (n_p,)

    def copy(self) -> "FlowState":
        return FlowState(self.T.copy(), self.u.copy(), self.p.copy())

    @classmethod
    def zeros(cls, spaces) -> "FlowState":
        return cls(np.zeros(spaces.n_T), np.zeros(spaces.n_u), np.zeros(spaces.n_p))


@dataclass
class OuterTrace:
    metrics: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    krylov_reports: list = field(default_factory=list)
    local_iterations: list = field(default_factory=list)
    apriori_slack: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.metrics)


class NewtonDivergence(RuntimeError):
    pass


class KrylovFailure(RuntimeError):
    pass


class OuterNonConvergence(RuntimeError):
    def __init__(self, message, state: FlowState, trace: OuterTrace):
        super().__init__(message)
        self.state = state
        self.trace = trace


# ---------------------------------------------------------------------------- inner solves


def _remove_constant(x):
    return x - x.mean()


class SchurSolver:
    """Solves [[A, B^T], [B, 0]] [U; P] = [F; G] through the pressure Schur complement.

    ``A`` is factorized directly; ``B A^-1 B^T`` is applied matrix-free and
    solved by CG (``symmetric=True``) or GMRES, preconditioned with the
    pressure mass matrix. The constant pressure mode is deflated.
    """

    def __init__(self, disc: Discretization, config: SolverConfig):
        self.disc = disc
        self.config = config
        self.B = disc.B_free
        self.BT = self.B.T.tocsr()
        self._Mp = factorize(disc.Mp)

    def solve(self, A, F, G, symmetric: bool):
        lu = factorize(A)
        B, BT = self.B, self.BT
        schur = lambda x: B @ lu.solve(BT @ x)  # noqa: E731
        rhs = _remove_constant(B @ lu.solve(F) - G)
        rnorm = np.linalg.norm(rhs)
        if rnorm == 0.0:
            P = np.zeros(B.shape[0])
            report = KrylovReport(0, 0.0, True)
        else:
            tol = self.config.krylov_rel_tol * rnorm
            kw = dict(M=self._Mp.solve, tol=tol, maxit=self.config.max_krylov, project=_remove_constant)
            if symmetric:
                P, report = cg(schur, rhs, **kw)
            else:
                P, report = gmres(schur, rhs, restart=self.config.gmres_restart, **kw)
            if not report.converged:
                raise KrylovFailure(
                    f"Schur solve did not converge: {report.iterations} its, residual {report.residual:.3e} "
                    f"(tol {tol:.3e})"
                )
        U = lu.solve(F - BT @ P)
        return U, P, report


def _increment_metric(disc, du, dp, u, p):
    den = disc.grad_norm(u) + disc.pressure_norm(p)
    num = disc.grad_norm(du) + disc.pressure_norm(dp)
    return 0.0 if den == 0.0 else num / den


def solve_stokes(disc: Discretization, load, config: SolverConfig, schur: SchurSolver | None = None):
    """Linear Stokes problem (no convection) with the mesh's boundary data."""
    schur = schur or SchurSolver(disc, config)
    u = disc.lift()
    R = disc.A0 @ u - load
    du, dp, rep = schur.solve(disc.A0_free, -R[disc.free], -(disc.B @ u), symmetric=True)
    u[disc.free] += du
    return u, disc.zero_mean(dp), rep


def solve_navier_stokes(disc: Discretization, load, u0, p0, config: SolverConfig,
                        schur: SchurSolver | None = None):
    """Newton's method for d(u;u,v) + (1/alpha)(D u, D v) - (p, div v) = <load, v>, (q, div u) = 0.

    Stops when the relative (grad u, p) increment is <= ``config.tol_newton``.
    Returns ``(u, p, newton_iterations, krylov_reports)``.
    """
    schur = schur or SchurSolver(disc, config)
    u = np.array(u0, dtype=float)
    u[disc.constrained] = disc.dirichlet.values
    p = disc.zero_mean(np.array(p0, dtype=float))
    free = disc.free
    reports = []
    for m in range(1, config.max_newton + 1):
        R = disc.convection_residual(u) + disc.A0 @ u + disc.B.T @ p - load
        J = disc.A0_free + disc.convection_jacobian(u, free_only=True)
        du_f, dp, rep = schur.solve(J, -R[free], -(disc.B @ u), symmetric=False)
        reports.append(rep)
        du = np.zeros_like(u)
        du[free] = du_f
        dp = disc.zero_mean(dp)
        u += du
        p += dp
        metric = _increment_metric(disc, du, dp, u, p)
        logger.debug("newton %d: increment %.3e, krylov its %d", m, metric, rep.iterations)
        if metric <= config.tol_newton:
            return u, p, m, reports
    raise NewtonDivergence(f"Newton did not converge in {config.max_newton} iterations (last increment {metric:.3e})")


# ---------------------------------------------------------------------------- outer iterations


def outer_metric(disc: Discretization, prev: FlowState, nxt: FlowState) -> float:
    """Relative combined increment of (T, grad u, p) between two iterates."""
    num = (
        disc.stress_norm(nxt.T - prev.T)
        + disc.grad_norm(nxt.u - prev.u)
        + disc.pressure_norm(nxt.p - prev.p)
    )
    den = disc.stress_norm(nxt.T) + disc.grad_norm(nxt.u) + disc.pressure_norm(nxt.p)
    return 0.0 if den == 0.0 else num / den


class _Outer:
    """Shared setup for the two outer algorithms."""

    def __init__(self, disc: Discretization, case, config: SolverConfig):
        self.disc = disc
        self.case = case
        self.config = config
        self.model = disc.model
        self.tables = disc.tables
        self.schur = SchurSolver(disc, config)
        self.f_load = disc.forcing(case.eval_f) if case is not None else np.zeros(disc.spaces.n_u)
        if case is not None:
            from .element import stress_moments

            tab = self.tables.data
            self.g_values = case.eval_g(tab.points(disc.mesh.origins, disc.mesh.side))
            self.g_moments = stress_moments(self.g_values, tab)
            self.g_norm = disc.data_norm(case.eval_g)
        else:
            self.g_moments = np.zeros((disc.mesh.n_elements, 27))
            self.g_norm = 0.0
        self.tol_local = cst.local_tolerance(disc.mesh.side, disc.area, config.local_tol)
        self.trace = OuterTrace()

    def data_moments(self, u):
        return self.disc.strain_moments(u) + self.g_moments

    def navier_stokes(self, load, u0, p0):
        u, p, nit, reps = solve_navier_stokes(self.disc, load, u0, p0, self.config, self.schur)
        self.trace.newton_iterations.append(nit)
        self.trace.krylov_reports.extend(reps)
        return u, p

    def record(self, k, prev: FlowState, nxt: FlowState) -> float:
        disc = self.disc
        metric = outer_metric(disc, prev, nxt)
        self.trace.metrics.append(metric)
        bound = (disc.strain_norm(nxt.u) + self.g_norm) / self.model.alpha
        self.trace.apriori_slack.append(bound - disc.stress_norm(nxt.T))
        logger.info(
            "outer iteration %d: metric %.3e, newton %d",
            k,
            metric,
            self.trace.newton_iterations[-1] if self.trace.newton_iterations else 0,
            extra={"iteration": k, "metric": metric},
        )
        return metric

    def fail(self, state):
        raise OuterNonConvergence(
            f"outer iteration did not converge in {self.config.max_outer} iterations "
            f"(last metric {self.trace.metrics[-1]:.3e})",
            state,
            self.trace,
        )


def run_lions_mercier(disc: Discretization, case, config: SolverConfig):
    """Lions-Mercier splitting. Returns ``(FlowState, OuterTrace)``."""
    t0 = time.perf_counter()
    run = _Outer(disc, case, config)
    model, tau, tables = disc.model, config.tau, disc.tables
    us, ps, rep = solve_stokes(disc, run.f_load, config, run.schur)
    run.trace.krylov_reports.append(rep)
    u, p = run.navier_stokes(run.f_load, us, ps)
    T = cst.project(tables, run.data_moments(u)).ravel() / model.alpha
    state = FlowState(T, u, p)
    for k in range(1, config.max_outer + 1):
        T_half, nloc = cst.lm_step1(model, tau, state.T.reshape(-1, 27), run.data_moments(state.u), tables, run.tol_local)
        run.trace.local_iterations.append(nloc)
        load = run.f_load + disc.stress_coupling_rhs(T_half)
        u, p = run.navier_stokes(load, state.u, state.p)
        T = cst.lm_step2_stress(model, tau, T_half, run.data_moments(u), tables).ravel()
        new = FlowState(T, u, p)
        metric = run.record(k, state, new)
        state = new
        if metric <= config.tol_outer:
            run.trace.wall_time = time.perf_counter() - t0
            return state, run.trace
    run.fail(state)


def run_fixed_point(disc: Discretization, case, config: SolverConfig):
    """Fixed-point alternation starting from zero. Returns ``(FlowState, OuterTrace)``."""
    t0 = time.perf_counter()
    run = _Outer(disc, case, config)
    model, tables = disc.model, disc.tables
    state = FlowState.zeros(disc.spaces)
    for k in range(1, config.max_outer + 1):
        load = run.f_load + disc.stress_coupling_rhs(state.T)
        if k == 1:
            u0, p0, rep = solve_stokes(disc, load, config, run.schur)
            run.trace.krylov_reports.append(rep)
        else:
            u0, p0 = state.u, state.p
        u, p = run.navier_stokes(load, u0, p0)
        problem = cst.LocalStressProblem(tables, run.data_moments(u), model.alpha, model.gamma, model)
        T, nloc = cst.solve_local_stress(problem, state.T.reshape(-1, 27), run.tol_local)
        run.trace.local_iterations.append(nloc)
        new = FlowState(T.ravel(), u, p)
        metric = run.record(k, state, new)
        state = new
        if metric <= config.tol_outer:
            run.trace.wall_time = time.perf_counter() - t0
            return state, run.trace
    run.fail(state)


def run(disc: Discretization, case, config: SolverConfig):
    if config.algorithm is Algorithm.LIONS_MERCIER:
        return run_lions_mercier(disc, case, config)
    return run_fixed_point(disc, case, config)


def system_residuals(disc: Discretization, case, state: FlowState) -> tuple[float, float, float]:
    """Relative residuals of the momentum, constitutive and continuity equations."""
    model = disc.model
    run = _Outer(disc, case, SolverConfig())
    load = run.f_load + disc.stress_coupling_rhs(state.T)
    R = disc.convection_residual(state.u) + disc.A0 @ state.u + disc.B.T @ state.p - load
    r_mom = np.linalg.norm(R[disc.free]) / max(np.linalg.norm(load[disc.free]), 1e-300)
    data = run.data_moments(state.u)
    problem = cst.LocalStressProblem(disc.tables, data, model.alpha, model.gamma, model)
    Rs = cst._residual(problem, state.T.reshape(-1, 27))
    r_st = np.sqrt(np.sum(cst.residual_l2(problem, Rs) ** 2)) / max(
        np.sqrt(np.sum(cst.residual_l2(problem, data) ** 2)), 1e-300
    )
    Bu = _remove_constant(disc.B @ state.u)
    scale = abs(disc.B) @ np.abs(state.u)
    r_div = np.linalg.norm(Bu) / max(np.linalg.norm(scale), 1e-300)
    return float(r_mom), float(r_st), float(r_div)
