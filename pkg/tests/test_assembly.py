"""Assembled blocks against literal loop-nest oracles.

The oracles locate points by scanning every triangle and build the P2
shape functions from a monomial fit, so they share no code with the
vectorized assembly.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from bsflow import params as pe
from bsflow.assembly import (
    BGN,
    GD,
    assemble_curvature_coupling,
    assemble_interface_fields,
    assemble_surface_viscosity,
    assemble_xi_cross,
    block2,
    convection_matrix,
    marangoni_vertex_vector,
    rho_cross_mass,
    rho_cross_mass_prev,
    surface_viscosity_vertex_matrix,
    transport_rhs,
    vertex_evaluation,
    viscous_matrix,
)
from bsflow.fem import P2Space, interpolate_I2, xfem_flux_column, xfem_volume_column
from bsflow.interface import InterfacePolygon, make_circle
from bsflow.mesh import Domain, build_uniform_mesh, classify_elements

BOX = Domain((-1.0, 1.0, -1.0, 1.0))
TOL = 1e-12


def mono(p):
    return np.array([1.0, p[0], p[1], p[0] ** 2, p[0] * p[1], p[1] ** 2])


def oracle_basis(space, x):
    """``{global node: phi(x)}`` for the lowest-index triangle containing ``x``."""
    m = space.mesh
    for t, tri in enumerate(m.triangles):
        a, b, c = m.vertices[tri]
        T = np.column_stack([b - a, c - a])
        l12 = np.linalg.solve(T, x - a)
        lam = np.array([1 - l12.sum(), *l12])
        if lam.min() >= -1e-12:
            nodes = np.array([a, b, c, (b + c) / 2, (c + a) / 2, (a + b) / 2])
            V = np.array([mono(p) for p in nodes])
            vals = np.linalg.solve(V, np.eye(6)).T @ mono(x)  # row a: coefficients of phi_a
            return {int(g): float(v) for g, v in zip(space.dofmap[t], vals)}
    raise AssertionError("point outside mesh")


def wobbly_polygon(rng, k, center=(0.05, -0.02), r=0.45):
    ang = 2 * np.pi * (np.arange(k) + rng.uniform(-0.3, 0.3, k)) / k
    rad = r * (1 + 0.15 * rng.uniform(-1, 1, k))
    return InterfacePolygon(np.asarray(center) + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]))


@pytest.fixture(scope="module")
def setup():
    rng = np.random.default_rng(2024)
    space = P2Space(build_uniform_mesh(BOX, 3))
    poly = wobbly_polygon(rng, 9)
    prev = InterfacePolygon(poly.points + 0.03 * rng.normal(size=poly.points.shape))
    return rng, space, poly, prev


def dense_close(a, b):
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    scale = max(1.0, np.abs(b).max())
    assert np.abs(a - b).max() <= TOL * scale


# ------------------------------------------------- lumped density cross terms


def test_rho_cross_mass_loop_oracle(setup):
    rng, space, poly, _ = setup
    rg = rng.uniform(-0.5, 2.0, poly.n)
    n = space.n_nodes
    want = np.zeros((2 * n, 2 * n))
    for j in range(poly.n):
        L = np.hypot(*(poly.points[(j + 1) % poly.n] - poly.points[j]))
        for k in (j, (j + 1) % poly.n):
            phi = oracle_basis(space, poly.points[k])
            for i, pi in phi.items():
                for l, pl in phi.items():
                    for r in range(2):
                        want[r * n + i, r * n + l] += 0.5 * L * rg[k] * pi * pl
    dense_close(rho_cross_mass(poly, rg, vertex_evaluation(space, poly.points)), want)


def test_rho_cross_mass_prev_loop_oracle(setup):
    rng, space, poly, prev = setup
    rg = rng.uniform(0.0, 2.0, poly.n)
    n = space.n_nodes
    want = np.zeros((2 * n, 2 * n))
    for j in range(prev.n):
        L = np.hypot(*(prev.points[(j + 1) % prev.n] - prev.points[j]))
        for k in (j, (j + 1) % prev.n):
            test = oracle_basis(space, poly.points[k])
            trial = oracle_basis(space, prev.points[k])
            for i, pi in test.items():
                for l, pl in trial.items():
                    for r in range(2):
                        want[r * n + i, r * n + l] += 0.5 * L * rg[k] * pi * pl
    E, Ep = vertex_evaluation(space, poly.points), vertex_evaluation(space, prev.points)
    dense_close(rho_cross_mass_prev(prev, rg, Ep, E), want)


def test_rho_cross_mass_hand_value():
    # a vertex on a mesh node, both adjacent segments of length 0.2, rho = 1
    space = P2Space(build_uniform_mesh(BOX, 2))
    pts = np.array([[0.0, 0.0], [0.2, 0.0], [0.1, 0.3], [-0.2 * np.cos(0.3), 0.2 * np.sin(0.3)]])
    poly = InterfacePolygon(pts)
    node = int(np.nonzero(np.all(np.isclose(space.nodes, 0.0), axis=1))[0][0])
    rg = np.array([1.0, 0.0, 0.0, 0.0])
    M = rho_cross_mass(poly, rg, vertex_evaluation(space, pts))
    # each adjacent segment contributes 1/2 * 0.2 * 1 * 1 * 1 = 0.1
    assert M[node, node] == pytest.approx(0.2, abs=1e-15)
    assert abs(rho_cross_mass(poly, np.zeros(4), vertex_evaluation(space, pts))).max() == 0.0


# ------------------------------------------------------ lumped xi cross terms


def xi_oracle(q1, q2, z1, z2):
    e = q2 - q1
    L = np.hypot(*e)
    nu = np.array([e[1], -e[0]]) / L
    MT = np.array([e, nu])  # rows are the columns of M
    return np.linalg.inv(MT) @ np.diag([0.5 * (z1 + z2), 0.0]) @ MT


def test_xi_cross_loop_oracle(setup):
    rng, space, poly, prev = setup
    tau = 0.01
    n = space.n_nodes
    U = rng.normal(size=space.n_dofs)
    Ep = vertex_evaluation(space, prev.points)
    U_at = (block2(Ep) @ U).reshape(2, -1).T
    rg = rng.uniform(-0.2, 2.0, prev.n)
    rstar = np.array(
        [0.5 * (rg[j] + rg[(j + 1) % prev.n]) if min(rg[j], rg[(j + 1) % prev.n]) >= 0 else 0.0 for j in range(prev.n)]
    )
    disp = poly.points - prev.points
    got = assemble_xi_cross(prev, rstar, U_at, disp, tau, Ep)
    want = np.zeros(2 * n)
    K = prev.n
    for j in range(K):
        a, b = j, (j + 1) % K
        qa, qb = prev.points[a], prev.points[b]
        L = np.hypot(*(qb - qa))
        t = (qb - qa) / L
        Va = disp[a] / tau - U_at[a]
        Vb = disp[b] / tau - U_at[b]
        pa, pb = oracle_basis(space, qa), oracle_basis(space, qb)
        for r in range(2):
            Lam = xi_oracle(qa, qb, U_at[a, r], U_at[b, r])
            for i in set(pa) | set(pb):
                # grad_s of pi(phi_i) along the segment
                g = (pb.get(i, 0.0) - pa.get(i, 0.0)) / L * t
                want[r * n + i] -= 0.5 * L * rstar[j] * ((Va + Vb) @ (Lam @ g))
    scale = max(1.0, np.abs(want).max())
    assert np.abs(got - want).max() <= TOL * scale


def test_xi_cross_vanishes_without_slip_or_density(setup):
    rng, space, poly, prev = setup
    U = rng.normal(size=space.n_dofs)
    Ep = vertex_evaluation(space, prev.points)
    U_at = (block2(Ep) @ U).reshape(2, -1).T
    tau = 0.02
    # the transport vector cancels up to rounding in (tau U) / tau - U
    assert np.abs(assemble_xi_cross(prev, np.ones(prev.n), U_at, tau * U_at, tau, Ep)).max() < 1e-15
    assert np.all(assemble_xi_cross(prev, np.zeros(prev.n), U_at, rng.normal(size=U_at.shape), tau, Ep) == 0)


# -------------------------------------------------------- surface viscosity


def test_surface_viscosity_loop_oracle(setup):
    rng, space, poly, _ = setup
    prm = pe.PhysicalParams(mu_gamma_bar=0.3, lambda_gamma_bar=0.2, b_mu=2.0, b_lambda=1.0)
    psi = rng.uniform(0, 1, poly.n)
    mu = prm.mu_gamma_bar * (1 + prm.b_mu * psi)
    lam = prm.lambda_gamma_bar * (1 + prm.b_lambda * psi)
    n = space.n_nodes
    want = np.zeros((2 * n, 2 * n))
    K = poly.n
    for j in range(K):
        a, b = j, (j + 1) % K
        qa, qb = poly.points[a], poly.points[b]
        L = np.hypot(*(qb - qa))
        t = (qb - qa) / L
        w = 0.5 * L * ((lam[a] + lam[b]) + 2 * (mu[a] + mu[b]))
        pa, pb = oracle_basis(space, qa), oracle_basis(space, qb)
        ids = set(pa) | set(pb)
        for i in ids:
            si = (pb.get(i, 0.0) - pa.get(i, 0.0)) / L
            for l in ids:
                sl = (pb.get(l, 0.0) - pa.get(l, 0.0)) / L
                for r in range(2):
                    for s in range(2):
                        want[r * n + i, s * n + l] += w * si * sl * t[r] * t[s]
    dense_close(assemble_surface_viscosity(poly, psi, prm, vertex_evaluation(space, poly.points)), want)


def test_surface_viscosity_examples():
    prm = pe.PhysicalParams(mu_gamma_bar=1.0, lambda_gamma_bar=1.0)
    poly = InterfacePolygon(np.array([[0.0, 0.0], [1.3, 0.0], [0.4, 0.9]]))
    S = surface_viscosity_vertex_matrix(poly, np.zeros(3), prm).toarray()
    u = np.concatenate([poly.points[:, 0], np.zeros(3)])  # u = (x, 0)
    tx = poly.tangents[:, 0]
    # (lambda + 2 mu) L (t_x^2)^2 per segment; the horizontal one gives 3 L
    assert u @ S @ u == pytest.approx(np.sum(3 * poly.lengths * tx**4), rel=1e-13)
    trans = np.concatenate([np.full(3, 0.7), np.full(3, -0.2)])
    np.testing.assert_allclose(S @ trans, 0.0, atol=1e-14)
    zero = pe.PhysicalParams(mu_gamma_bar=0.0, lambda_gamma_bar=0.0)
    space = P2Space(build_uniform_mesh(BOX, 2))
    poly = InterfacePolygon(0.5 * poly.points)
    assert assemble_surface_viscosity(poly, np.zeros(3), zero, vertex_evaluation(space, poly.points)).nnz == 0


def test_surface_viscosity_psd(setup):
    rng, space, poly, _ = setup
    prm = pe.PhysicalParams(mu_gamma_bar=1.0, lambda_gamma_bar=-1.5)  # lambda + 2 mu > 0
    S = surface_viscosity_vertex_matrix(poly, rng.uniform(0, 1, poly.n), prm).toarray()
    np.testing.assert_allclose(S, S.T, atol=1e-14)
    assert np.linalg.eigvalsh(S).min() >= -1e-10


# ----------------------------------------------------------------- bulk terms


def test_convection_exactly_antisymmetric():
    rng = np.random.default_rng(1)
    space = P2Space(build_uniform_mesh(BOX, 4))
    C = convection_matrix(space, rng.uniform(1, 3, space.mesh.n_triangles), rng.normal(size=space.n_dofs))
    assert abs(C + C.T).max() == 0.0
    v = rng.normal(size=space.n_nodes)
    assert abs(v @ C @ v) <= 1e-12 * np.abs(C).sum()


def test_viscous_energy_quadratic_shear():
    sq = Domain((0.0, 1.0, 0.0, 1.0))
    space = P2Space(build_uniform_mesh(sq, 2))
    A = viscous_matrix(space, 1.0)
    u = interpolate_I2(space, lambda z: np.column_stack([z[:, 1] ** 2, 0 * z[:, 0]])).coeffs
    # D(u) = [[0, y], [y, 0]], so 2 int |D|^2 = 4 int y^2 = 4/3
    assert u @ A @ u == pytest.approx(4 / 3, rel=1e-12)
    c = interpolate_I2(space, lambda z: np.tile([1.0, -2.0], (len(z), 1))).coeffs
    np.testing.assert_allclose(A @ c, 0.0, atol=1e-12)


# --------------------------------------------------------- curvature coupling


def test_marangoni_constant_is_zero():
    poly = make_circle((0, 0), 0.5, 12)
    np.testing.assert_array_equal(marangoni_vertex_vector(poly, np.full(12, 0.3)), 0.0)


def test_bgn_kinematic_sum_is_volume_flux():
    rng = np.random.default_rng(4)
    space = P2Space(build_uniform_mesh(BOX, 4))
    poly = wobbly_polygon(rng, 15)
    E = vertex_evaluation(space, poly.points)
    prm = pe.PhysicalParams()
    cb = assemble_curvature_coupling(poly, np.zeros(15), -2 * np.ones(15), prm, BGN, 0.1, E, space)
    U = rng.normal(size=space.n_dofs)
    col, _ = xfem_volume_column(space, poly.points, classify_elements(space.mesh, poly.points))
    assert np.sum(cb.ku @ U) == pytest.approx(col @ U, abs=1e-12)
    assert np.sum(cb.ku @ U) == pytest.approx(xfem_flux_column(space, poly) @ U, abs=1e-12)
    # lumped side: sum_k <v, chi_k nu>^h equals the segment-normal flux of the P1 field v
    v = rng.normal(size=(15, 2))
    lumped = -0.1 * np.sum(cb.kx @ np.concatenate([v[:, 0], v[:, 1]]))
    vn = 0.5 * poly.lengths * np.einsum("jd,jd->j", v + np.roll(v, -1, axis=0), poly.normals)
    assert lumped == pytest.approx(vn.sum(), abs=1e-13)


def test_gd_blocks_shapes():
    space = P2Space(build_uniform_mesh(BOX, 2))
    poly = make_circle((0, 0), 0.5, 8)
    cb = assemble_curvature_coupling(poly, np.zeros(8), np.zeros((8, 2)), pe.PhysicalParams(), GD, 0.1, vertex_evaluation(space, poly.points))
    assert cb.uk.shape == (space.n_dofs, 16) and cb.xx.shape == (16, 16)


# -------------------------------------------------------------- field systems


def transport_oracle(poly, edge_value, V):
    K = poly.n
    out = np.zeros(K)
    for j in range(K):
        a, b = j, (j + 1) % K
        e = poly.points[b] - poly.points[a]
        L = np.hypot(*e)
        g = e / L**2  # grad_s chi_b; grad_s chi_a = -g
        out[a] += 0.5 * L * edge_value[j] * ((V[a] + V[b]) @ -g)
        out[b] += 0.5 * L * edge_value[j] * ((V[a] + V[b]) @ g)
    return out


def test_transport_rhs_loop_oracle():
    rng = np.random.default_rng(8)
    poly = wobbly_polygon(rng, 11)
    ev, V = rng.uniform(0, 2, 11), rng.normal(size=(11, 2))
    np.testing.assert_allclose(transport_rhs(poly, ev, V), transport_oracle(poly, ev, V), atol=1e-13)


def test_bgn_surfactant_rhs_oracle():
    rng = np.random.default_rng(9)
    old = wobbly_polygon(rng, 10)
    new = InterfacePolygon(old.points + 0.01 * rng.normal(size=(10, 2)))
    prm = pe.PhysicalParams(eos=pe.EquationOfState(pe.LINEAR, 1.0, 0.5), d_gamma=0.1)
    psi, rg, V = rng.uniform(0.1, 1.5, 10), rng.uniform(0.1, 1.5, 10), rng.normal(size=(10, 2))
    tau = 0.05
    _, psys = assemble_interface_fields(old, new, tau, V, rg, psi, prm, BGN)
    star = np.array([pe.psi_star_eps(prm.eos, prm.epsilon_reg, psi[j], psi[(j + 1) % 10]) for j in range(10)])
    want = old.vertex_weights * psi - tau * transport_oracle(old, star, V)
    np.testing.assert_allclose(psys.rhs, want, atol=1e-13)


def test_gd_fields_conserve_totals():
    rng = np.random.default_rng(10)
    old = wobbly_polygon(rng, 12)
    new = InterfacePolygon(old.points * 1.1 + 0.02)
    prm = pe.PhysicalParams(d_gamma=0.3)
    rg, psi = rng.uniform(0, 1, 12), rng.uniform(0, 1, 12)
    rsys, psys = assemble_interface_fields(old, new, 0.1, rng.normal(size=(12, 2)), rg, psi, prm, GD)
    r_new = sp.linalg.spsolve(rsys.matrix.tocsc(), rsys.rhs)
    p_new = sp.linalg.spsolve(psys.matrix.tocsc(), psys.rhs)
    assert new.vertex_weights @ r_new == pytest.approx(old.vertex_weights @ rg, rel=1e-13)
    assert new.vertex_weights @ p_new == pytest.approx(old.vertex_weights @ psi, rel=1e-13)


def test_stationary_fields_unchanged():
    poly = make_circle((0, 0), 0.5, 10)
    psi = np.linspace(0.1, 1.0, 10)
    prm = pe.PhysicalParams(d_gamma=0.0)
    for scheme in (GD, BGN):
        _, psys = assemble_interface_fields(poly, poly, 0.1, np.zeros((10, 2)), psi, psi, prm, scheme)
        np.testing.assert_allclose(sp.linalg.spsolve(psys.matrix.tocsc(), psys.rhs), psi, rtol=2e-16)
