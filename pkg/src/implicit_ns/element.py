"""Per-mesh element tables shared by every element of a uniform square mesh."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .basis import Space, gauss_rule, physical_gradients, tabulate
from .spaces import FROBENIUS_WEIGHTS

ASSEMBLY_ORDER = 4
DATA_ORDER = 5


@dataclass(frozen=True)
class QuadTables:
    """Basis tables on one rule, already mapped to a square of side ``side``."""

    ref_points: np.ndarray  # (nq, 2)
    dx: np.ndarray  # (nq,) weights times Jacobian determinant
    q2: np.ndarray  # (nq, 9)
    dq2: np.ndarray  # (nq, 9, 2) physical gradients
    q1: np.ndarray  # (nq, 4)

    def points(self, origins: np.ndarray, side: float) -> np.ndarray:
        """Physical quadrature points, shape (ne, nq, 2)."""
        return origins[:, None, :] + 0.5 * side * (self.ref_points[None, :, :] + 1.0)


def _tables(order: int, side: float) -> QuadTables:
    rule = gauss_rule(order)
    q2 = tabulate(Space.Q2, rule)
    q1 = tabulate(Space.Q1, rule)
    return QuadTables(
        ref_points=rule.points,
        dx=rule.weights * side**2 / 4.0,
        q2=q2.values,
        dq2=physical_gradients(q2, side),
        q1=q1.values,
    )


class ElementTables:
    def __init__(self, side: float):
        self.side = side
        self.asm = _tables(ASSEMBLY_ORDER, side)
        self.data = _tables(DATA_ORDER, side)

    @cached_property
    def q2_mass(self) -> np.ndarray:
        t = self.asm
        return np.einsum("q,qa,qb->ab", t.dx, t.q2, t.q2)

    @cached_property
    def stress_mass(self) -> np.ndarray:
        """27 x 27 Frobenius mass matrix: block-diagonal with weights (1, 2, 1)."""
        return np.kron(np.diag(FROBENIUS_WEIGHTS), self.q2_mass)

    @cached_property
    def stress_mass_inv(self) -> np.ndarray:
        return np.linalg.inv(self.stress_mass)


def stress_at(T: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Evaluate element stress coefficients (ne, 27) at points -> (ne, nq, 3)."""
    return np.einsum("qa,eca->eqc", values, T.reshape(-1, 3, 9))


def stress_moments(Tq: np.ndarray, tables: QuadTables) -> np.ndarray:
    """Moments of a pointwise tensor field (ne, nq, 3) against the stress basis -> (ne, 27)."""
    m = np.einsum("q,qa,eqc->eca", tables.dx, tables.q2, Tq)
    m *= FROBENIUS_WEIGHTS[None, :, None]
    return m.reshape(len(Tq), 27)
