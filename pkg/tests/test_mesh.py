import numpy as np
import pytest

from implicit_ns.mesh import Domain, MeshSpec, build_mesh, element_geometry, locate_element


def test_unit_square_level2_counts():
    m = build_mesh(MeshSpec(Domain.UNIT_SQUARE, 2))
    assert m.n_elements == 16
    assert m.n_vertices == 25
    assert m.h == pytest.approx(np.sqrt(2) / 4)


def test_unit_square_level1_boundary_edges():
    m = build_mesh(MeshSpec(Domain.UNIT_SQUARE, 1))
    assert m.n_elements == 4
    assert len(m.boundary_edges) == 8


def test_lshape_level1_counts():
    m = build_mesh(MeshSpec(Domain.L_SHAPE, 1))
    assert m.n_elements == 12
    # 3 quadrants of a 2x2 grid: outer boundary has 8 unit-length sides of side 1/2 plus reentrant edges
    assert len(m.boundary_edges) == 16


@pytest.mark.parametrize("domain,count", [(Domain.UNIT_SQUARE, 4), (Domain.L_SHAPE, 12)])
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_element_count_formula(domain, count, n):
    m = build_mesh(MeshSpec(domain, n))
    assert m.n_elements == count * 4 ** (n - 1)
    assert m.side == 0.5**n


def test_level_must_be_positive():
    with pytest.raises(ValueError):
        MeshSpec(Domain.UNIT_SQUARE, 0)


def test_element_geometry_examples():
    m = build_mesh(MeshSpec(Domain.UNIT_SQUARE, 1))
    e = locate_element(m, (0.25, 0.25))
    origin, side = element_geometry(m, e)
    np.testing.assert_allclose(origin, [0, 0])
    assert side == 0.5

    m = build_mesh(MeshSpec(Domain.L_SHAPE, 1))
    e = locate_element(m, (-0.75, 0.75))
    origin, side = element_geometry(m, e)
    np.testing.assert_allclose(origin, [-1, 0.5])
    assert side == 0.5
    assert side**2 / 4 > 0


def test_element_geometry_bad_index():
    m = build_mesh(MeshSpec(Domain.UNIT_SQUARE, 1))
    with pytest.raises(IndexError):
        element_geometry(m, 4)


@pytest.mark.parametrize("domain,area", [(Domain.UNIT_SQUARE, 1.0), (Domain.L_SHAPE, 3.0)])
def test_area_and_orientation(domain, area):
    m = build_mesh(MeshSpec(domain, 3))
    v = m.vertices[m.elements]  # (ne, 4, 2)
    x, y = v[..., 0], v[..., 1]
    signed = 0.5 * np.sum(x * np.roll(y, -1, 1) - np.roll(x, -1, 1) * y, axis=1)
    np.testing.assert_allclose(signed, m.side**2)  # CCW squares
    assert signed.sum() == pytest.approx(area, abs=1e-14)
    # axis-aligned: first edge horizontal, second vertical
    np.testing.assert_allclose(v[:, 1] - v[:, 0], np.tile([m.side, 0], (m.n_elements, 1)))
    np.testing.assert_allclose(v[:, 2] - v[:, 1], np.tile([0, m.side], (m.n_elements, 1)))


@pytest.mark.parametrize("domain", list(Domain))
def test_edge_incidence(domain):
    m = build_mesh(MeshSpec(domain, 3))
    edges = {}
    for e, quad in enumerate(m.elements):
        for k in range(4):
            key = tuple(sorted((quad[k], quad[(k + 1) % 4])))
            edges.setdefault(key, []).append((e, k))
    counts = {len(v) for v in edges.values()}
    assert counts <= {1, 2}
    boundary = {tuple(p) for v in edges.values() if len(v) == 1 for p in v}
    assert boundary == {tuple(p) for p in m.boundary_edges}
    # every boundary edge lies on the domain boundary: its outward midpoint is outside
    mids = m.boundary_edge_coordinates().mean(axis=1)
    centers = m.origins[m.boundary_edges[:, 0]] + m.side / 2
    outward = mids + (mids - centers) * 0.1
    assert not np.any(m.contains(outward))


@pytest.mark.parametrize("domain", list(Domain))
def test_refinement_nesting(domain):
    coarse = build_mesh(MeshSpec(domain, 2)).vertices
    fine = build_mesh(MeshSpec(domain, 3)).vertices
    fine_set = {tuple(np.round(v, 12)) for v in fine}
    assert all(tuple(np.round(v, 12)) in fine_set for v in coarse)


def test_lshape_corner_shared_by_three():
    m = build_mesh(MeshSpec(Domain.L_SHAPE, 2))
    idx = np.flatnonzero(np.all(np.abs(m.vertices) < 1e-14, axis=1))
    assert len(idx) == 1
    assert np.count_nonzero(m.elements == idx[0]) == 3
    assert not m.contains(np.array([[0.5, 0.5]]))[0]


def test_lexicographic_ordering():
    m = build_mesh(MeshSpec(Domain.L_SHAPE, 2))
    key = m.vertices[:, 1] * 10 + m.vertices[:, 0]
    assert np.all(np.diff(key) > 0)
    c = m.origins
    ekey = c[:, 1] * 10 + c[:, 0]
    assert np.all(np.diff(ekey) > 0)


def test_mesh_is_immutable():
    m = build_mesh(MeshSpec(Domain.UNIT_SQUARE, 1))
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
