"""Global numbering for the velocity (Q2^2), pressure (Q1) and stress (discontinuous Q2 sym) fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import Space, reference_nodes
from .mesh import QuadMesh

# Q2 local node indices lying on each local edge (bottom, right, top, left)
Q2_EDGE_NODES = ((0, 1, 2), (2, 5, 8), (6, 7, 8), (0, 3, 6))

# independent components of a symmetric 2-tensor and their Frobenius weights
STRESS_COMPONENTS = ("T11", "T12", "T22")
FROBENIUS_WEIGHTS = np.array([1.0, 2.0, 1.0])


@dataclass(frozen=True, eq=False)
class SystemSpaces:
    """DOF maps for one mesh.

    Velocity DOFs are blocked by component: ``dof = c * n_vnodes + node``.
    ``velocity_map[e]`` lists the 9 x-component DOFs then the 9 y-component
    DOFs in Q2 local order. Stress DOFs are element-owned:
    ``stress index = 27 * e + 9 * c + a`` with ``c`` in (T11, T12, T22).
    """

    velocity_nodes: np.ndarray  # (n_vnodes, 2) coordinates
    velocity_node_map: np.ndarray  # (ne, 9)
    velocity_map: np.ndarray  # (ne, 18)
    pressure_map: np.ndarray  # (ne, 4), Q1 local order
    stress_map: np.ndarray  # (ne, 27)
    boundary_nodes: np.ndarray  # sorted velocity node indices on the boundary
    pressure_nodes: np.ndarray  # (n_p, 2)

    @property
    def n_vnodes(self) -> int:
        return len(self.velocity_nodes)

    @property
    def n_u(self) -> int:
        return 2 * self.n_vnodes

    @property
    def n_p(self) -> int:
        return len(self.pressure_nodes)

    @property
    def n_T(self) -> int:
        return self.stress_map.size

    @property
    def n_elements(self) -> int:
        return len(self.velocity_map)

    @property
    def constrained_dofs(self) -> np.ndarray:
        return np.concatenate([self.boundary_nodes, self.boundary_nodes + self.n_vnodes])

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_u, dtype=bool)
        mask[self.constrained_dofs] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True, eq=False)
class DirichletData:
    dofs: np.ndarray
    values: np.ndarray


def build_spaces(mesh: QuadMesh) -> SystemSpaces:
    ne = mesh.n_elements
    cell = mesh.lattice[mesh.elements[:, 0]]  # lower-left lattice corner per element
    local = np.rint(reference_nodes(Space.Q2) + 1).astype(int)  # offsets in {0,1,2}
    q2_lattice = (2 * cell[:, None, :] + local[None, :, :]).reshape(-1, 2)
    uniq, inverse = np.unique(q2_lattice[:, ::-1], axis=0, return_inverse=True)
    node_lattice = uniq[:, ::-1]
    node_map = inverse.reshape(ne, 9)
    n_nodes = len(node_lattice)
    velocity_nodes = node_lattice * (mesh.side / 2)

    velocity_map = np.concatenate([node_map, node_map + n_nodes], axis=1)
    pressure_map = mesh.elements[:, [0, 1, 3, 2]]
    stress_map = np.arange(27 * ne).reshape(ne, 27)

    be, le = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
    edge_nodes = np.array(Q2_EDGE_NODES)[le]  # (nb, 3)
    boundary_nodes = np.unique(node_map[be[:, None], edge_nodes])

    spaces = SystemSpaces(
        velocity_nodes=velocity_nodes,
        velocity_node_map=node_map,
        velocity_map=velocity_map,
        pressure_map=pressure_map,
        stress_map=stress_map,
        boundary_nodes=boundary_nodes,
        pressure_nodes=mesh.vertices,
    )
    for arr in (velocity_nodes, node_map, velocity_map, stress_map, boundary_nodes):
        arr.setflags(write=False)
    return spaces


def interpolate_velocity(spaces: SystemSpaces, field) -> np.ndarray:
    """Nodal Q2 interpolant of a vector field ``field(x) -> (..., 2)``."""
    vals = np.asarray(field(spaces.velocity_nodes), dtype=float)
    return np.concatenate([vals[:, 0], vals[:, 1]])


def interpolate_pressure(spaces: SystemSpaces, field) -> np.ndarray:
    return np.asarray(field(spaces.pressure_nodes), dtype=float).copy()


def interpolate_dirichlet(mesh: QuadMesh, spaces: SystemSpaces, u_exact) -> DirichletData:
    """Boundary values of the velocity obtained by nodal interpolation."""
    nodes = spaces.boundary_nodes
    vals = np.asarray(u_exact(spaces.velocity_nodes[nodes]), dtype=float).reshape(len(nodes), 2)
    return DirichletData(
        dofs=np.concatenate([nodes, nodes + spaces.n_vnodes]),
        values=np.concatenate([vals[:, 0], vals[:, 1]]),
    )


def homogeneous_dirichlet(spaces: SystemSpaces) -> DirichletData:
    dofs = spaces.constrained_dofs
    return DirichletData(dofs=dofs, values=np.zeros(len(dofs)))
