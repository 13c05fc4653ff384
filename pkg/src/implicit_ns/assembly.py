"""Global assembly of the discrete forms on a uniform square mesh.

Since every element is the same square, the constant-coefficient element
matrices (viscous, divergence, stiffness, masses) are computed once and
scattered. Solution-dependent terms (convection, stress coupling) are
evaluated for all elements at once with ``einsum``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .constitutive import ConstitutiveModel, frobenius_norm, nonlinear_part
from .element import ElementTables, QuadTables, stress_at, stress_moments
from .mesh import QuadMesh
from .spaces import DirichletData, SystemSpaces


class Scatter:
    """Fixed-pattern COO -> CSR assembly via a precomputed slot index."""

    def __init__(self, rows, cols, shape):
        rows = np.ravel(rows)
        cols = np.ravel(cols)
        keep = (rows >= 0) & (cols >= 0)
        self.keep = keep
        rows, cols = rows[keep], cols[keep]
        key = rows.astype(np.int64) * shape[1] + cols
        uniq, slot = np.unique(key, return_inverse=True)
        self.slot = slot
        self.nnz = len(uniq)
        r, c = np.divmod(uniq, shape[1])
        indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        self.indptr = np.cumsum(indptr)
        self.indices = c
        self.shape = shape

    def __call__(self, vals) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=np.ravel(vals)[self.keep], minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


def _pairs(map_r, map_c):
    ne = len(map_r)
    rows = np.broadcast_to(map_r[:, :, None], (ne, map_r.shape[1], map_c.shape[1]))
    cols = np.broadcast_to(map_c[:, None, :], (ne, map_r.shape[1], map_c.shape[1]))
    return rows, cols


def local_viscous(tab: QuadTables) -> np.ndarray:
    """int D(phi_j):D(phi_i) for the 18 vector Q2 functions, rows (c, a), cols (d, b)."""
    dN = tab.dq2
    lap = np.einsum("q,qak,qbk->ab", tab.dx, dN, dN)
    cross = np.einsum("q,qad,qbc->cadb", tab.dx, dN, dN)
    K = 0.5 * cross
    K[0, :, 0, :] += 0.5 * lap
    K[1, :, 1, :] += 0.5 * lap
    return K.reshape(18, 18)


def local_stiffness(tab: QuadTables) -> np.ndarray:
    lap = np.einsum("q,qak,qbk->ab", tab.dx, tab.dq2, tab.dq2)
    return np.kron(np.eye(2), lap)


def local_divergence(tab: QuadTables) -> np.ndarray:
    """-int q_i div(phi_j): (4, 18)."""
    return -np.einsum("q,qi,qbd->idb", tab.dx, tab.q1, tab.dq2).reshape(4, 18)


def local_pressure_mass(tab: QuadTables) -> np.ndarray:
    return np.einsum("q,qi,qj->ij", tab.dx, tab.q1, tab.q1)


def velocity_at(u_e: np.ndarray, tab: QuadTables):
    """Values (ne, nq, 2) and gradients (ne, nq, 2, 2) from element coefficients (ne, 18)."""
    ue = u_e.reshape(-1, 2, 9)
    U = np.einsum("qa,eca->eqc", tab.q2, ue)
    G = np.einsum("qaj,eca->eqcj", tab.dq2, ue)
    return U, G


def sym_components(G):
    return np.stack([G[..., 0, 0], 0.5 * (G[..., 0, 1] + G[..., 1, 0]), G[..., 1, 1]], axis=-1)


def full_tensor(S):
    """(..., 3) components -> (..., 2, 2)."""
    return np.stack([np.stack([S[..., 0], S[..., 1]], -1), np.stack([S[..., 1], S[..., 2]], -1)], -2)


def convection_local(U, G, tab: QuadTables, jacobian: bool):
    """Element residuals of d(u; u, v_i) or the matrices of its derivative.

    d(a; b, c) = 1/2 int ((a.grad) b).c - 1/2 int ((a.grad) c).b
    """
    N, dN, dx = tab.q2, tab.dq2, tab.dx
    UgradN = np.einsum("eqk,qak->eqa", U, dN)  # (u.grad) N_a
    if not jacobian:
        conv = np.einsum("eqk,eqck->eqc", U, G)
        r = 0.5 * np.einsum("q,eqc,qa->eca", dx, conv, N)
        r -= 0.5 * np.einsum("q,eqa,eqc->eca", dx, UgradN, U)
        return r.reshape(len(U), 18)
    ne = len(U)
    J = np.zeros((ne, 2, 9, 2, 9))
    # derivative in the advecting slot
    J += 0.5 * np.einsum("q,qb,eqcd,qa->ecadb", dx, N, G, N)
    J -= 0.5 * np.einsum("q,qb,qad,eqc->ecadb", dx, N, dN, U)
    # derivative in the advected slot
    blk = 0.5 * np.einsum("q,eqb,qa->eab", dx, UgradN, N) - 0.5 * np.einsum("q,eqa,qb->eab", dx, UgradN, N)
    J[:, 0, :, 0, :] += blk
    J[:, 1, :, 1, :] += blk
    return J.reshape(ne, 18, 18)


@dataclass
class SaddleSystem:
    A: sp.csr_matrix
    B: sp.csr_matrix
    F: np.ndarray
    G: np.ndarray


class Discretization:
    """Assembled operators for one mesh, constitutive model and boundary data."""

    def __init__(self, mesh: QuadMesh, spaces: SystemSpaces, model: ConstitutiveModel,
                 dirichlet: DirichletData | None = None):
        self.mesh = mesh
        self.spaces = spaces
        self.model = model
        self.tables = ElementTables(mesh.side)
        self.area = mesh.area
        if dirichlet is None:
            dirichlet = DirichletData(spaces.constrained_dofs, np.zeros(len(spaces.constrained_dofs)))
        self.dirichlet = dirichlet
        n_u = spaces.n_u
        self.free = spaces.free_dofs
        self.constrained = np.asarray(dirichlet.dofs)
        self.free_index = np.full(n_u, -1, dtype=np.int64)
        self.free_index[self.free] = np.arange(len(self.free))

        vmap, pmap = spaces.velocity_map, spaces.pressure_map
        vf = self.free_index[vmap]
        self._scatter_uu = Scatter(*_pairs(vmap, vmap), (n_u, n_u))
        self._scatter_ff = Scatter(*_pairs(vf, vf), (len(self.free), len(self.free)))
        self._scatter_pu = Scatter(*_pairs(pmap, vmap), (spaces.n_p, n_u))
        self._scatter_pp = Scatter(*_pairs(pmap, pmap), (spaces.n_p, spaces.n_p))
        ne = mesh.n_elements
        tab = self.tables.asm
        self.local_viscous = local_viscous(tab) / model.alpha
        self._tile = lambda M: np.broadcast_to(M, (ne,) + M.shape)

    # ------------------------------------------------------------------ constant operators
    @cached_property
    def A0(self) -> sp.csr_matrix:
        """(1/alpha) int D(u):D(v) on all velocity DOFs."""
        return self._scatter_uu(self._tile(self.local_viscous))

    @cached_property
    def A0_free(self) -> sp.csr_matrix:
        return self._scatter_ff(self._tile(self.local_viscous))

    @cached_property
    def B(self) -> sp.csr_matrix:
        """-int q div v: rows pressure, columns all velocity DOFs."""
        return self._scatter_pu(self._tile(local_divergence(self.tables.asm)))

    @cached_property
    def B_free(self) -> sp.csr_matrix:
        return self.B[:, self.free].tocsr()

    @cached_property
    def K(self) -> sp.csr_matrix:
        """int grad u : grad v (for H1 seminorms)."""
        return self._scatter_uu(self._tile(local_stiffness(self.tables.asm)))

    @cached_property
    def Mp(self) -> sp.csr_matrix:
        return self._scatter_pp(self._tile(local_pressure_mass(self.tables.asm)))

    @cached_property
    def pressure_integrals(self) -> np.ndarray:
        """int q_i for every pressure basis function."""
        return np.asarray(self.Mp.sum(axis=0)).ravel()

    def lift(self) -> np.ndarray:
        """Velocity vector holding the boundary values and zeros elsewhere."""
        u = np.zeros(self.spaces.n_u)
        u[self.constrained] = self.dirichlet.values
        return u

    # ------------------------------------------------------------------ solution-dependent terms
    def element_velocity(self, u: np.ndarray) -> np.ndarray:
        return u[self.spaces.velocity_map]

    def scatter_velocity(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.spaces.velocity_map.ravel(), weights=local.ravel(), minlength=self.spaces.n_u)

    def convection_residual(self, u: np.ndarray) -> np.ndarray:
        U, G = velocity_at(self.element_velocity(u), self.tables.asm)
        return self.scatter_velocity(convection_local(U, G, self.tables.asm, jacobian=False))

    def convection_jacobian(self, u: np.ndarray, free_only: bool = False) -> sp.csr_matrix:
        U, G = velocity_at(self.element_velocity(u), self.tables.asm)
        J = convection_local(U, G, self.tables.asm, jacobian=True)
        return (self._scatter_ff if free_only else self._scatter_uu)(J)

    def stress_coupling_rhs(self, T: np.ndarray) -> np.ndarray:
        """(gamma/alpha) int mu(|T_h|) T_h : D(v_i)."""
        m = self.model
        if m.gamma == 0.0:
            return np.zeros(self.spaces.n_u)
        tab = self.tables.asm
        S = full_tensor(nonlinear_part(m, stress_at(T.reshape(-1, 27), tab.q2)))
        local = np.einsum("q,eqcj,qaj->eca", tab.dx, S, tab.dq2)
        return (m.gamma / m.alpha) * self.scatter_velocity(local)

    def forcing(self, f) -> np.ndarray:
        """int f . v_i with the data rule; ``f(x) -> (..., 2)``."""
        tab = self.tables.data
        fx = np.asarray(f(tab.points(self.mesh.origins, self.mesh.side)), dtype=float)
        local = np.einsum("q,eqc,qa->eca", tab.dx, fx, tab.q2)
        return self.scatter_velocity(local)

    def strain_moments(self, u: np.ndarray, g=None) -> np.ndarray:
        """Moments of D(u_h) + g against the element stress basis, (ne, 27)."""
        tab = self.tables.data
        _, G = velocity_at(self.element_velocity(u), tab)
        D = sym_components(G)
        if g is not None:
            D = D + np.asarray(g(tab.points(self.mesh.origins, self.mesh.side)), dtype=float)
        return stress_moments(D, tab)

    # ------------------------------------------------------------------ norms
    def grad_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(u @ (self.K @ u), 0.0)))

    def strain_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.model.alpha * u @ (self.A0 @ u), 0.0)))

    def pressure_norm(self, p: np.ndarray) -> float:
        return float(np.sqrt(max(p @ (self.Mp @ p), 0.0)))

    def stress_norm(self, T: np.ndarray) -> float:
        T = T.reshape(-1, 27)
        return float(np.sqrt(max(np.einsum("ei,ij,ej->", T, self.tables.stress_mass, T), 0.0)))

    def data_norm(self, g) -> float:
        """L2 norm of a pointwise tensor field (components) with the data rule."""
        tab = self.tables.data
        vals = np.asarray(g(tab.points(self.mesh.origins, self.mesh.side)), dtype=float)
        return float(np.sqrt(np.einsum("q,eq->", tab.dx, frobenius_norm(vals) ** 2)))

    def zero_mean(self, p: np.ndarray) -> np.ndarray:
        return p - (self.pressure_integrals @ p) / self.area


def assemble_viscous_divergence(mesh, spaces, dirichlet, alpha) -> SaddleSystem:
    """Free-DOF viscous block, divergence block and the boundary-lift loads."""
    disc = Discretization(mesh, spaces, ConstitutiveModel(alpha=alpha), dirichlet)
    lift = disc.lift()
    F = -(disc.A0 @ lift)[disc.free]
    G = -(disc.B @ lift)
    return SaddleSystem(disc.A0_free, disc.B_free, F, G)


def assemble_pressure_mass(mesh, spaces) -> sp.csr_matrix:
    return Discretization(mesh, spaces, ConstitutiveModel()).Mp
