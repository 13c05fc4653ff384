"""Discretization errors against the exact fields and observed convergence rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import Discretization, sym_components, velocity_at
from .constitutive import frobenius_norm
from .element import stress_at


@dataclass(frozen=True)
class ErrorTriple:
    err_T: float
    err_u: float
    err_p: float

    def as_tuple(self):
        return (self.err_T, self.err_u, self.err_p)


# Weights of (T11, T12, T22) in the stress error. The published tables measure the
# component vector (shear entry once); FROBENIUS counts it twice.
COMPONENT = np.array([1.0, 1.0, 1.0])
FROBENIUS = np.array([1.0, 2.0, 1.0])


def compute_errors(disc: Discretization, state, case, stress_weights=COMPONENT) -> ErrorTriple:
    """L2 stress error, H1-seminorm velocity error (full gradient), L2 pressure error.

    The discrete pressure is shifted to zero mean first. ``stress_weights``
    selects how the shear component enters the stress error (see
    ``COMPONENT`` / ``FROBENIUS``).
    """
    spaces = disc.spaces
    if state.u.shape != (spaces.n_u,) or state.p.shape != (spaces.n_p,) or state.T.shape != (spaces.n_T,):
        raise ValueError("state does not match the discretization")
    if case.domain is not disc.mesh.domain:
        raise ValueError(f"case domain {case.domain} differs from mesh domain {disc.mesh.domain}")
    tab = disc.tables.data
    x = tab.points(disc.mesh.origins, disc.mesh.side)

    Th = stress_at(state.T.reshape(-1, 27), tab.q2)
    err_T = np.einsum("q,eqc,c->", tab.dx, (case.Td(x) - Th) ** 2, np.asarray(stress_weights, float))

    _, G = velocity_at(disc.element_velocity(state.u), tab)
    err_u = np.einsum("q,eqij->", tab.dx, (case.grad_u(x) - G) ** 2)

    p = disc.zero_mean(state.p)
    ph = np.einsum("qi,ei->eq", tab.q1, p[disc.spaces.pressure_map])
    err_p = np.einsum("q,eq->", tab.dx, (case.p(x) - ph) ** 2)
    return ErrorTriple(float(np.sqrt(err_T)), float(np.sqrt(err_u)), float(np.sqrt(err_p)))


def strain_error(disc: Discretization, state, case) -> float:
    """||D(u) - D(u_h)||, for reference; the tables use the full gradient."""
    tab = disc.tables.data
    x = tab.points(disc.mesh.origins, disc.mesh.side)
    _, G = velocity_at(disc.element_velocity(state.u), tab)
    return float(np.sqrt(np.einsum("q,eq->", tab.dx, frobenius_norm(case.D(x) - sym_components(G)) ** 2)))


def convergence_rate(errors) -> np.ndarray:
    """log2(e_k / e_{k+1}) between consecutive halvings of h."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two levels to compute a rate")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be positive and finite")
    return np.log2(e[:-1] / e[1:])
