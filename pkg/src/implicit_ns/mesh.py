"""Structured square-element meshes of the unit square and the L-shaped domain."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Domain(enum.Enum):
    UNIT_SQUARE = "unit_square"
    L_SHAPE = "l_shape"


@dataclass(frozen=True)
class MeshSpec:
    domain: Domain
    level: int

    def __post_init__(self):
        if self.level < 1:
            raise ValueError(f"refinement level must be >= 1, got {self.level}")


# local edges: 0 bottom, 1 right, 2 top, 3 left (vertex pairs in CCW order)
LOCAL_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))


@dataclass(frozen=True, eq=False)
class QuadMesh:
    """Conforming mesh of identical axis-aligned squares.

    ``vertices`` and ``elements`` are ordered lexicographically by (y, x);
    each element lists its corners counter-clockwise starting at the lower
    left one. ``lattice`` holds the integer coordinates of every vertex in
    units of ``side`` (used by the DOF builder to identify shared nodes).
    """

    spec: MeshSpec
    side: float
    vertices: np.ndarray
    elements: np.ndarray
    lattice: np.ndarray
    boundary_edges: np.ndarray
    origins: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return float(np.sqrt(2.0) * self.side)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        return self.n_elements * self.side**2

    @property
    def domain(self) -> Domain:
        return self.spec.domain

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask of points lying in the closed domain."""
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= -1e-14) & (x <= 1 + 1e-14), axis=-1)
        if self.domain is Domain.UNIT_SQUARE:
            return inside
        box = np.all((x >= -1 - 1e-14) & (x <= 1 + 1e-14), axis=-1)
        notch = (x[..., 0] > 1e-14) & (x[..., 1] > 1e-14)
        return box & ~notch

    def boundary_edge_coordinates(self) -> np.ndarray:
        """(n_edges, 2, 2) endpoint coordinates of the boundary edges."""
        e, le = self.boundary_edges[:, 0], self.boundary_edges[:, 1]
        a = np.array([p for p, _ in LOCAL_EDGES])[le]
        b = np.array([q for _, q in LOCAL_EDGES])[le]
        return np.stack([self.vertices[self.elements[e, a]], self.vertices[self.elements[e, b]]], axis=1)


def _cell_lower_left(spec: MeshSpec) -> np.ndarray:
    """Integer lattice corners of the kept cells, ordered by (y, x)."""
    n = 2**spec.level
    if spec.domain is Domain.UNIT_SQUARE:
        rng = np.arange(n)
        jj, ii = np.meshgrid(rng, rng, indexing="ij")
        return np.column_stack([ii.ravel(), jj.ravel()])
    rng = np.arange(-n, n)
    jj, ii = np.meshgrid(rng, rng, indexing="ij")
    cells = np.column_stack([ii.ravel(), jj.ravel()])
    keep = ~((cells[:, 0] >= 0) & (cells[:, 1] >= 0))
    return cells[keep]


def build_mesh(spec: MeshSpec) -> QuadMesh:
    side = 1.0 / 2**spec.level
    cells = _cell_lower_left(spec)
    corners = np.stack(
        [cells, cells + [1, 0], cells + [1, 1], cells + [0, 1]], axis=1
    )  # (ne, 4, 2)
    flat = corners.reshape(-1, 2)
    # lexicographic (y, x) ordering of the unique lattice vertices
    order_key = flat[:, ::-1]
    uniq, inverse = np.unique(order_key, axis=0, return_inverse=True)
    lattice = uniq[:, ::-1].copy()
    elements = inverse.reshape(-1, 4)
    vertices = lattice * side

    edges = np.sort(elements[:, LOCAL_EDGES], axis=-1).reshape(-1, 2)  # (4 ne, 2)
    _, edge_id, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    on_boundary = counts[edge_id.ravel()] == 1
    idx = np.flatnonzero(on_boundary)
    boundary_edges = np.column_stack([idx // 4, idx % 4])

    mesh = QuadMesh(
        spec=spec,
        side=side,
        vertices=vertices,
        elements=elements,
        lattice=lattice,
        boundary_edges=boundary_edges,
        origins=vertices[elements[:, 0]],
    )
    for arr in (mesh.vertices, mesh.elements, mesh.lattice, mesh.boundary_edges, mesh.origins):
        arr.setflags(write=False)
    return mesh


def element_geometry(mesh: QuadMesh, e: int) -> tuple[np.ndarray, float]:
    """Origin (lower-left corner) and side length of element ``e``.

    The reference map is ``x = origin + side/2 * (xhat + 1)``, with constant
    Jacobian determinant ``side**2 / 4``.
    """
    if not 0 <= e < mesh.n_elements:
        raise IndexError(f"element index {e} out of range [0, {mesh.n_elements})")
    return mesh.origins[e].copy(), mesh.side


def locate_element(mesh: QuadMesh, x) -> int:
    """Index of an element containing point ``x`` (first match)."""
    x = np.asarray(x, dtype=float)
    lo = mesh.origins
    hit = np.all((x >= lo - 1e-14) & (x <= lo + mesh.side + 1e-14), axis=1)
    found = np.flatnonzero(hit)
    if found.size == 0:
        raise ValueError(f"point {x} is not in the mesh")
    return int(found[0])
