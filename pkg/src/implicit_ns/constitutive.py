"""The implicit constitutive map T -> alpha T + gamma mu(|T|) T and its element-local solves.

Symmetric tensors are stored by their independent components
``(T11, T12, T22)``; the Frobenius product counts the shear entry twice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .element import ElementTables, stress_at, stress_moments
from .spaces import FROBENIUS_WEIGHTS

logger = logging.getLogger(__name__)

MAX_NEWTON = 50
MAX_HALVINGS = 30


def mu(s):
    """mu(s) = 1/sqrt(1 + s^2): positive, bounded by 1, with s*mu(s) < 1."""
    s = np.asarray(s, dtype=float)
    return 1.0 / np.sqrt(1.0 + s * s)


def dmu(s):
    s = np.asarray(s, dtype=float)
    return -s / (1.0 + s * s) ** 1.5


@dataclass(frozen=True)
class ConstitutiveModel:
    alpha: float = 1.0
    gamma: float = 0.0
    mu: Callable = field(default=mu, repr=False)
    dmu: Callable = field(default=dmu, repr=False)
    # bounds valid for the default mu: sup s*mu(s), sup mu, Lipschitz constant of T -> mu(|T|)T
    C1: float = 1.0
    mu_max: float = 1.0
    Lambda: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")


class LocalSolveError(RuntimeError):
    def __init__(self, element: int, residual: float, iterations: int):
        super().__init__(
            f"local stress Newton failed on element {element} after {iterations} "
            f"iterations (residual {residual:.3e})"
        )
        self.element = element
        self.residual = residual


def frobenius_norm(T):
    T = np.asarray(T, dtype=float)
    return np.sqrt(np.einsum("...c,c,...c->...", T, FROBENIUS_WEIGHTS, T))


def frobenius_dot(R, S):
    return np.einsum("...c,c,...c->...", np.asarray(R, float), FROBENIUS_WEIGHTS, np.asarray(S, float))


def nonlinear_part(model: ConstitutiveModel, T):
    """mu(|T|) T, componentwise."""
    T = np.asarray(T, dtype=float)
    return model.mu(frobenius_norm(T))[..., None] * T


def apply_map(model: ConstitutiveModel, T):
    T = np.asarray(T, dtype=float)
    return model.alpha * T + model.gamma * nonlinear_part(model, T)


def _dmu_over_s(model: ConstitutiveModel, s):
    s = np.asarray(s, dtype=float)
    safe = np.where(s > 1e-14, s, 1.0)
    return np.where(s > 1e-14, model.dmu(safe) / safe, 0.0)


def nonlinear_jacobian(model: ConstitutiveModel, T):
    """d(mu(|T|) T)/dT on components, shape (..., 3, 3)."""
    T = np.asarray(T, dtype=float)
    n = frobenius_norm(T)
    eye = np.eye(3)
    return model.mu(n)[..., None, None] * eye + _dmu_over_s(model, n)[..., None, None] * (
        T[..., :, None] * (FROBENIUS_WEIGHTS * T)[..., None, :]
    )


def map_jacobian(model: ConstitutiveModel, T):
    """Jacobian of ``apply_map`` in the (T11, T12, T22) parameterization."""
    return model.alpha * np.eye(3) + model.gamma * nonlinear_jacobian(model, T)


@dataclass
class LocalStressProblem:
    """Element-wise Galerkin problem ``int_E (a T + b mu(|T|) T - data) : S = 0``.

    ``moments`` holds ``int_E data : Phi_i`` per element, shape (ne, 27).
    """

    tables: ElementTables
    moments: np.ndarray
    a: float
    b: float
    model: ConstitutiveModel

    def __post_init__(self):
        if self.a <= 0 or self.b < 0:
            raise ValueError(f"local problem needs a > 0 and b >= 0 (a={self.a}, b={self.b})")


def _residual(problem: LocalStressProblem, T):
    tab = problem.tables
    R = problem.a * T @ tab.stress_mass - problem.moments
    if problem.b:
        Tq = stress_at(T, tab.asm.q2)
        R = R + problem.b * stress_moments(nonlinear_part(problem.model, Tq), tab.asm)
    return R


def _jacobian(problem: LocalStressProblem, T):
    tab = problem.tables
    Tq = stress_at(T, tab.asm.q2)
    Jq = nonlinear_jacobian(problem.model, Tq)  # (ne, nq, 3, 3)
    Jq = Jq * FROBENIUS_WEIGHTS[:, None]
    q2 = tab.asm.q2
    J = np.einsum("q,qa,qb,eqcd->ecadb", tab.asm.dx, q2, q2, Jq).reshape(len(T), 27, 27)
    return problem.a * tab.stress_mass + problem.b * J


def residual_l2(problem: LocalStressProblem, R):
    """L2(E) norm of the projected residual, sqrt(R^T M^-1 R) per element."""
    return np.sqrt(np.maximum(np.einsum("ei,ij,ej->e", R, problem.tables.stress_mass_inv, R), 0.0))


def solve_local_stress(problem: LocalStressProblem, initial_guess, tol_scaled: float):
    """Newton on the 27 coefficients of every element at once.

    Elements leave the active set once their projected residual is
    <= ``tol_scaled``; a step that does not reduce the residual is halved.
    Returns the (ne, 27) coefficients and the max Newton count.
    """
    tab = problem.tables
    if problem.b == 0.0:
        return problem.moments @ tab.stress_mass_inv / problem.a, 1
    T = np.array(initial_guess, dtype=float).reshape(-1, 27)
    R = _residual(problem, T)
    res = residual_l2(problem, R)
    active = np.flatnonzero(res > tol_scaled)
    it = 0
    while active.size:
        if it >= MAX_NEWTON:
            worst = active[np.argmax(res[active])]
            raise LocalSolveError(int(worst), float(res[worst]), it)
        it += 1
        sub = LocalStressProblem(tab, problem.moments[active], problem.a, problem.b, problem.model)
        Ta, Ra, ra = T[active], R[active], res[active]
        step = np.linalg.solve(_jacobian(sub, Ta), -Ra[..., None])[..., 0]
        lam = np.ones(len(active))
        pending = np.arange(len(active))
        Tn, Rn, rn = Ta.copy(), Ra.copy(), ra.copy()
        for _ in range(MAX_HALVINGS + 1):
            trial = Ta[pending] + lam[pending, None] * step[pending]
            sub_t = LocalStressProblem(
                tab, problem.moments[active[pending]], problem.a, problem.b, problem.model
            )
            Rt = _residual(sub_t, trial)
            rt = residual_l2(sub_t, Rt)
            ok = (rt < ra[pending]) | (rt <= tol_scaled)
            done = pending[ok]
            Tn[done], Rn[done], rn[done] = trial[ok], Rt[ok], rt[ok]
            pending = pending[~ok]
            if not pending.size:
                break
            lam[pending] *= 0.5
        if pending.size:
            # no decrease even for tiny steps: accept full step and let the cap report failure
            Tn[pending] = Ta[pending] + step[pending]
            sub_t = LocalStressProblem(tab, problem.moments[active[pending]], problem.a, problem.b, problem.model)
            Rn[pending] = _residual(sub_t, Tn[pending])
            rn[pending] = residual_l2(sub_t, Rn[pending])
        T[active], R[active], res[active] = Tn, Rn, rn
        active = active[rn > tol_scaled]
    return T, it


def local_tolerance(side: float, domain_area: float, tol: float = 1e-6) -> float:
    """Per-element tolerance making the global residual at most ``tol``."""
    return tol * np.sqrt(side**2 / domain_area)


def project(tables: ElementTables, moments) -> np.ndarray:
    """Element-local L2 projection onto the stress space given moments."""
    return np.asarray(moments) @ tables.stress_mass_inv


def lm_step1(model, tau, T_k, data_moments, tables, tol_scaled):
    """Monotone half-step: Galerkin zero of
    ``T + tau*gamma*mu(|T|)T - tau*(D(u_k)+g) - (1 - alpha*tau) T_k``.

    ``data_moments`` are the moments of ``D(u_k) + g``.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    rhs = tau * data_moments + (1.0 - model.alpha * tau) * (T_k @ tables.stress_mass)
    problem = LocalStressProblem(tables, rhs, 1.0, tau * model.gamma, model)
    return solve_local_stress(problem, T_k, tol_scaled)


def lm_step2_stress(model, tau, T_half, data_moments, tables):
    """Linear half-step: ``(1/tau + alpha) T = T_half/tau + D(u) + g - gamma mu(|T_half|) T_half``."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    rhs = (T_half @ tables.stress_mass) / tau + data_moments
    if model.gamma:
        Tq = stress_at(T_half, tables.asm.q2)
        rhs = rhs - model.gamma * stress_moments(nonlinear_part(model, Tq), tables.asm)
    return rhs @ tables.stress_mass_inv / (1.0 / tau + model.alpha)
