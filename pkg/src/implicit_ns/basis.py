"""Reference-square Lagrange bases (Q1, Q2) and tensor Gauss rules on [-1, 1]^2."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class Space(enum.Enum):
    Q1 = 1
    Q2 = 2


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,)

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class ShapeTable:
    space: Space
    values: np.ndarray  # (nq, nb)
    gradients: np.ndarray  # (nq, nb, 2), reference coordinates

    @property
    def n_basis(self) -> int:
        return self.values.shape[1]


@lru_cache(maxsize=None)
def gauss_rule(k: int) -> QuadratureRule:
    """k x k tensor Gauss-Legendre rule, exact to degree 2k-1 in each variable.

    Points are ordered with x running fastest.
    """
    if not 1 <= k <= 6:
        raise ValueError(f"unsupported Gauss rule order {k}; expected 1..6")
    x, w = np.polynomial.legendre.leggauss(k)
    yy, xx = np.meshgrid(x, x, indexing="ij")
    wy, wx = np.meshgrid(w, w, indexing="ij")
    rule = QuadratureRule(np.column_stack([xx.ravel(), yy.ravel()]), (wx * wy).ravel())
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


def _lagrange_1d(degree: int, t: np.ndarray):
    """Values and derivatives of the 1D Lagrange basis on equispaced nodes."""
    t = np.asarray(t, dtype=float)
    if degree == 1:
        val = np.stack([(1 - t) / 2, (1 + t) / 2], axis=-1)
        der = np.stack([np.full_like(t, -0.5), np.full_like(t, 0.5)], axis=-1)
    elif degree == 2:
        val = np.stack([t * (t - 1) / 2, 1 - t**2, t * (t + 1) / 2], axis=-1)
        der = np.stack([t - 0.5, -2 * t, t + 0.5], axis=-1)
    else:
        raise ValueError(degree)
    return val, der


def reference_nodes(space: Space) -> np.ndarray:
    """Nodes of the reference element, local index ``a = j * (k+1) + i``."""
    t = np.linspace(-1.0, 1.0, space.value + 1)
    yy, xx = np.meshgrid(t, t, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def evaluate(space: Space, points) -> tuple[np.ndarray, np.ndarray]:
    """Basis values (np, nb) and reference gradients (np, nb, 2) at points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vx, dx = _lagrange_1d(space.value, points[:, 0])
    vy, dy = _lagrange_1d(space.value, points[:, 1])
    # a = j * n1 + i  ->  outer product with y index slow, x index fast
    val = np.einsum("pj,pi->pji", vy, vx).reshape(len(points), -1)
    gx = np.einsum("pj,pi->pji", vy, dx).reshape(len(points), -1)
    gy = np.einsum("pj,pi->pji", dy, vx).reshape(len(points), -1)
    return val, np.stack([gx, gy], axis=-1)


def tabulate(space: Space, rule: QuadratureRule) -> ShapeTable:
    val, grad = evaluate(space, rule.points)
    return ShapeTable(space, val, grad)


def physical_gradients(table: ShapeTable, side: float) -> np.ndarray:
    """Gradients on an axis-aligned square of the given side length."""
    if side <= 0:
        raise ValueError(f"element side must be positive, got {side}")
    return table.gradients * (2.0 / side)
