import numpy as np
import pytest
import scipy.sparse.linalg as spla

from implicit_ns.assembly import Discretization, assemble_pressure_mass, assemble_viscous_divergence, local_viscous
from implicit_ns.basis import Space, evaluate, gauss_rule, reference_nodes
from implicit_ns.constitutive import ConstitutiveModel, mu
from implicit_ns.element import ElementTables, stress_moments
from implicit_ns.manufactured import ManufacturedCase
from implicit_ns.mesh import Domain, MeshSpec, build_mesh
from implicit_ns.spaces import build_spaces, homogeneous_dirichlet, interpolate_dirichlet, interpolate_pressure, interpolate_velocity


def make(domain=Domain.UNIT_SQUARE, n=2, alpha=1.0, gamma=0.0):
    mesh = build_mesh(MeshSpec(domain, n))
    spaces = build_spaces(mesh)
    return Discretization(mesh, spaces, ConstitutiveModel(alpha=alpha, gamma=gamma))


@pytest.mark.parametrize("domain", list(Domain))
def test_rigid_motion_energy(domain):
    d = make(domain, 2, alpha=0.7)
    for field in (lambda x: np.stack([-x[:, 1], x[:, 0]], -1), lambda x: np.stack([np.ones(len(x)), -2 * np.ones(len(x))], -1)):
        v = interpolate_velocity(d.spaces, field)
        assert abs(v @ (d.A0 @ v)) <= 1e-12


def test_divergence_free_linear_field():
    d = make(n=2)
    v = interpolate_velocity(d.spaces, lambda x: np.stack([x[:, 0], -x[:, 1]], -1))
    np.testing.assert_allclose(d.B @ v, 0, atol=1e-14)


def test_b_kills_constant_with_zero_boundary_values():
    d = make(n=2)
    v = interpolate_velocity(d.spaces, lambda x: np.stack([np.ones(len(x)), np.ones(len(x))], -1))
    v[d.spaces.constrained_dofs] = 0.0
    np.testing.assert_allclose(np.ones(d.spaces.n_p) @ (d.B @ v), 0, atol=1e-14)


@pytest.mark.parametrize("alpha", [1.0, 0.25])
def test_single_element_energy(alpha):
    side = 0.5
    tab = ElementTables(side).asm
    K = local_viscous(tab) / alpha
    nodes = side / 2 * (reference_nodes(Space.Q2) + 1)
    v = np.concatenate([nodes[:, 0], np.zeros(9)])
    assert v @ K @ v == pytest.approx(side**2 / alpha, rel=1e-13)


def test_viscous_block_spd_on_free_dofs():
    d = make(Domain.L_SHAPE, 1)
    A = d.A0_free.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-14)
    assert np.linalg.eigvalsh(A).min() > 0


def test_spec_wrapper_matches_discretization():
    d = make(n=1, alpha=2.0)
    sys = assemble_viscous_divergence(d.mesh, d.spaces, homogeneous_dirichlet(d.spaces), 2.0)
    np.testing.assert_allclose(sys.A.toarray(), d.A0_free.toarray())
    assert sys.B.shape == (d.spaces.n_p, len(d.free))
    np.testing.assert_allclose(sys.F, 0)
    np.testing.assert_allclose(sys.G, 0)


def _random_u(d, seed):
    return np.random.default_rng(seed).standard_normal(d.spaces.n_u)


def test_convection_zero_state():
    d = make(n=2)
    z = np.zeros(d.spaces.n_u)
    assert np.all(d.convection_residual(z) == 0)
    assert d.convection_jacobian(z).count_nonzero() == 0


@pytest.mark.parametrize("domain", list(Domain))
def test_convection_skew_symmetry(domain):
    d = make(domain, 2)
    for seed in range(5):
        a = _random_u(d, seed)
        v = _random_u(d, seed + 100)
        # d(v; v, v) = 0
        r = d.convection_residual(v)
        assert abs(v @ r) <= 1e-12 * np.linalg.norm(v) * np.linalg.norm(r)
        # v.J(a)v = d(v; a, v) + d(a; v, v) and d(v; a, v) = -d(v; v, a) = -a.R(v),
        # so d(a; v, v) = v.J(a)v + a.R(v) must vanish
        J = d.convection_jacobian(a)
        dav = v @ (J @ v) + a @ r
        assert abs(dav) <= 1e-12 * np.linalg.norm(v) ** 2 * np.linalg.norm(a)


def test_convection_polarization():
    d = make(n=2)
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((2, d.spaces.n_u))
    # R is quadratic, so R(a + b) - R(a) - R(b) = J(a) b
    lhs = d.convection_residual(a + b) - d.convection_residual(a) - d.convection_residual(b)
    np.testing.assert_allclose(lhs, d.convection_jacobian(a) @ b, atol=1e-11)


@pytest.mark.parametrize("domain", list(Domain))
def test_convection_jacobian_vs_finite_difference(domain):
    d = make(domain, 2)
    rng = np.random.default_rng(11)
    u = rng.standard_normal(d.spaces.n_u)
    J = d.convection_jacobian(u)
    eps = 1e-6
    for _ in range(10):
        w = rng.standard_normal(d.spaces.n_u)
        fd = (d.convection_residual(u + eps * w) - d.convection_residual(u)) / eps
        err = np.linalg.norm(fd - J @ w)
        assert err <= 10 * eps * max(np.linalg.norm(J @ w), 1.0)


def test_free_jacobian_is_submatrix():
    d = make(n=1)
    u = _random_u(d, 4)
    J = d.convection_jacobian(u).toarray()
    Jf = d.convection_jacobian(u, free_only=True).toarray()
    np.testing.assert_allclose(Jf, J[np.ix_(d.free, d.free)])


def test_stress_coupling_trivial_cases():
    d = make(n=2, gamma=1.0)
    assert np.all(d.stress_coupling_rhs(np.zeros(d.spaces.n_T)) == 0)
    d0 = make(n=2, gamma=0.0)
    T = np.random.default_rng(0).standard_normal(d0.spaces.n_T)
    assert np.all(d0.stress_coupling_rhs(T) == 0)


def _patch_oracle(d, node, comp, integrand):
    """Independent 5x5 quadrature of integrand(x, grad phi) over the support of one Q2 node."""
    rule = gauss_rule(5)
    total = 0.0
    vals, grads = evaluate(Space.Q2, rule.points)
    for e in range(d.mesh.n_elements):
        local = np.flatnonzero(d.spaces.velocity_node_map[e] == node)
        if len(local) == 0:
            continue
        a = local[0]
        origin, s = d.mesh.origins[e], d.mesh.side
        for q in range(len(rule.weights)):
            x = origin + s / 2 * (rule.points[q] + 1)
            grad_phi = np.zeros((2, 2))
            grad_phi[comp] = grads[q, a] * 2 / s
            total += rule.weights[q] * s**2 / 4 * integrand(x, vals[q, a], grad_phi)
    return total


def test_stress_coupling_constant_tensor_vs_oracle():
    alpha, gamma = 2.0, 3.0
    d = make(n=2, alpha=alpha, gamma=gamma)
    T = np.zeros((d.mesh.n_elements, 3, 9))
    T[:, 0, :], T[:, 2, :] = 1.0, -1.0
    rhs = d.stress_coupling_rhs(T.ravel())
    Tfull = np.diag([1.0, -1.0])
    coeff = gamma / alpha * mu(np.sqrt(2.0))
    node = np.flatnonzero(np.all(np.abs(d.spaces.velocity_nodes - [0.375, 0.5]) < 1e-14, axis=1))[0]
    for comp in (0, 1):
        want = _patch_oracle(d, node, comp, lambda x, phi, gphi: coeff * np.sum(Tfull * 0.5 * (gphi + gphi.T)))
        assert rhs[node + comp * d.spaces.n_vnodes] == pytest.approx(want, abs=1e-14)


def test_forcing_partition_of_unity():
    for domain, area in ((Domain.UNIT_SQUARE, 1.0), (Domain.L_SHAPE, 3.0)):
        d = make(domain, 2)
        F = d.forcing(lambda x: np.stack([np.ones(x.shape[:-1]), np.zeros(x.shape[:-1])], -1))
        nv = d.spaces.n_vnodes
        assert F[:nv].sum() == pytest.approx(area)
        np.testing.assert_allclose(F[nv:], 0)
        assert np.all(d.forcing(lambda x: np.zeros(x.shape)) == 0)


def test_case1_forcing_vs_oracle():
    model = ConstitutiveModel(1.0, 1.0)
    case = ManufacturedCase(1, model)
    mesh = build_mesh(MeshSpec(Domain.UNIT_SQUARE, 2))
    d = Discretization(mesh, build_spaces(mesh), model)
    F = d.forcing(case.eval_f)
    node = np.flatnonzero(np.all(np.abs(d.spaces.velocity_nodes - [0.25, 0.625]) < 1e-14, axis=1))[0]
    for comp in (0, 1):
        want = _patch_oracle(d, node, comp, lambda x, phi, gphi: case.eval_f(x[None])[0, comp] * phi)
        assert F[node + comp * d.spaces.n_vnodes] == pytest.approx(want, rel=1e-12)


def test_strain_moments():
    d = make(n=2)
    assert np.all(d.strain_moments(np.zeros(d.spaces.n_u)) == 0)
    u = interpolate_velocity(d.spaces, lambda x: np.stack([x[:, 0], -x[:, 1]], -1))
    const = np.zeros((d.mesh.n_elements, len(d.tables.data.dx), 3))
    const[..., 0], const[..., 2] = 1.0, -1.0
    np.testing.assert_allclose(d.strain_moments(u), stress_moments(const, d.tables.data), atol=1e-15)
    T = d.strain_moments(u) @ d.tables.stress_mass_inv
    np.testing.assert_allclose(T.reshape(-1, 3, 9)[:, 0], 1.0)
    np.testing.assert_allclose(T.reshape(-1, 3, 9)[:, 1], 0.0, atol=1e-13)


def test_case1_strain_moments_one_element_vs_oracle():
    model = ConstitutiveModel(1.0, 1.0)
    case = ManufacturedCase(1, model)
    mesh = build_mesh(MeshSpec(Domain.UNIT_SQUARE, 2))
    d = Discretization(mesh, build_spaces(mesh), model)
    u = interpolate_velocity(d.spaces, case.u)
    m = d.strain_moments(u, case.eval_g)
    e = 5
    rule = gauss_rule(5)
    vals, grads = evaluate(Space.Q2, rule.points)
    s, origin = mesh.side, mesh.origins[e]
    ue = u[d.spaces.velocity_map[e]].reshape(2, 9)
    want = np.zeros((3, 9))
    for q in range(len(rule.weights)):
        x = origin + s / 2 * (rule.points[q] + 1)
        G = ue @ (grads[q] * 2 / s)  # (2, 2): G[c, j] = d u_c / d x_j
        D = 0.5 * (G + G.T)
        g = case.eval_g(x[None])[0]
        comp = np.array([D[0, 0], D[0, 1], D[1, 1]]) + g
        want += rule.weights[q] * s**2 / 4 * np.outer(comp * [1, 2, 1], vals[q])
    np.testing.assert_allclose(m[e], want.ravel(), rtol=1e-12, atol=1e-15)


def test_pressure_mass():
    mesh = build_mesh(MeshSpec(Domain.L_SHAPE, 2))
    M = assemble_pressure_mass(mesh, build_spaces(mesh))
    assert M.sum() == pytest.approx(3.0)
    np.testing.assert_allclose(M.toarray(), M.T.toarray(), atol=1e-16)
    assert np.linalg.eigvalsh(M.toarray()).min() > 0
    # corner vertex (-1, -1) touches one element
    i = np.flatnonzero(np.all(mesh.vertices == [-1, -1], axis=1))[0]
    assert M[i, i] == pytest.approx(mesh.side**2 / 9)


def test_galerkin_residual_of_interpolants_is_second_order():
    model = ConstitutiveModel(1.0, 0.0)
    case = ManufacturedCase(1, model)
    res = []
    for n in (2, 3, 4):
        mesh = build_mesh(MeshSpec(Domain.UNIT_SQUARE, n))
        spaces = build_spaces(mesh)
        d = Discretization(mesh, spaces, model, interpolate_dirichlet(mesh, spaces, case.u))
        u = interpolate_velocity(spaces, case.u)
        p = interpolate_pressure(spaces, case.p)
        T = d.strain_moments(u, case.eval_g) @ d.tables.stress_mass_inv
        R = d.convection_residual(u) + d.A0 @ u + d.B.T @ p - d.forcing(case.eval_f) - d.stress_coupling_rhs(T.ravel())
        Rf = R[d.free]
        Kf = d.K[d.free][:, d.free].tocsc()
        res.append(np.sqrt(Rf @ spla.spsolve(Kf, Rf)))
    rates = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(rates > 1.8), rates
