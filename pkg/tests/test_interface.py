import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from bsflow.interface import (
    InterfacePolygon,
    check_assumptions,
    enclosed_area,
    lumped_inner_product,
    make_circle,
    make_ellipse,
    mesh_quality,
    taylor_deformation,
    write_polyline_csv,
    write_polyline_vtk,
)
from bsflow.mesh import Domain, GeometricError


def star_polygon(rng, k):
    """Random star-shaped (hence simple) counterclockwise polygon."""
    ang = np.sort(rng.uniform(0, 2 * np.pi, k))
    ang += np.linspace(0, 1e-3, k)  # keep angles distinct
    r = rng.uniform(0.3, 1.0, k)
    return InterfacePolygon(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))


def brute_lumped(poly, eta_ends, zeta_ends):
    """Loop over segments and their two endpoints; ``*_ends[j, e]`` are one-sided values."""
    total = 0.0
    for j in range(poly.n):
        a, b = poly.points[j], poly.points[(j + 1) % poly.n]
        L = np.hypot(*(b - a))
        for e in range(2):
            total += 0.5 * L * np.dot(np.atleast_1d(eta_ends[j][e]), np.atleast_1d(zeta_ends[j][e]))
    return total


def test_square_from_four_vertices():
    p = make_circle((0, 0), 0.5, 4)
    np.testing.assert_allclose(p.lengths, np.sqrt(2) / 2, rtol=1e-15)
    assert p.perimeter == pytest.approx(2 * np.sqrt(2), rel=1e-15)


@pytest.mark.parametrize("k", [3, 7, 32, 100])
def test_regular_polygon_area_and_equal_edges(k):
    p = make_circle((0.2, -0.1), 0.7, k)
    assert enclosed_area(p) == pytest.approx(0.5 * k * 0.49 * np.sin(2 * np.pi / k), abs=1e-14)
    assert np.ptp(p.lengths) < 1e-14
    ratio, h = mesh_quality(p)
    assert ratio == pytest.approx(1.0, abs=1e-12)
    assert h == pytest.approx(p.lengths.max())


def test_make_circle_rejects_bad_input():
    with pytest.raises(ValueError):
        make_circle((0, 0), 1.0, 2)
    with pytest.raises(ValueError):
        make_circle((0, 0), 0.0, 8)


def test_outward_normals_and_radial_vertex_normals():
    p = make_circle((1.0, 2.0), 0.5, 12)
    mid = 0.5 * (p.points + p.next_points) - (1.0, 2.0)
    assert np.all(np.einsum("nd,nd->n", mid, p.normals) > 0)
    r = p.points - (1.0, 2.0)
    cross = r[:, 0] * p.vertex_normals[:, 1] - r[:, 1] * p.vertex_normals[:, 0]
    np.testing.assert_allclose(cross, 0.0, atol=1e-14)


def test_collinear_vertex_normal():
    p = InterfacePolygon(np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [1.0, 2.0]]))
    np.testing.assert_allclose(p.vertex_normals[1], [0.0, -1.0], atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 30))
def test_vertex_normal_identity(seed, k):
    """Lumped products against the segment normal equal those against the vertex normal."""
    rng = np.random.default_rng(seed)
    p = star_polygon(rng, k)
    v, w = rng.normal(size=(k, 2)), rng.normal(size=k)
    nu = p.normals
    lhs = brute_lumped(
        p,
        [[v[j], v[(j + 1) % k]] for j in range(k)],
        [[w[j] * nu[j], w[(j + 1) % k] * nu[j]] for j in range(k)],
    )
    rhs = lumped_inner_product(p, v, w[:, None] * p.vertex_normals)
    assert rhs == pytest.approx(lhs, abs=1e-13 * max(1.0, abs(lhs)))


def test_lumped_examples():
    p = make_ellipse((0, 0), 1.0, 0.4, 20)
    assert lumped_inner_product(p, 1.0, 1.0) == pytest.approx(p.perimeter, rel=1e-15)
    seg = InterfacePolygon(np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]]))
    # values only on the first segment: endpoint values (0, 2), L = 2
    eta = np.zeros((3, 2))
    eta[0] = [0.0, 2.0]
    assert lumped_inner_product(seg, eta, np.ones((3, 2)), endpoint=True) == pytest.approx(2.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lumped_symmetric_and_matches_loop(seed):
    rng = np.random.default_rng(seed)
    p = star_polygon(rng, 9)
    a, b = rng.normal(size=(9, 2)), rng.normal(size=(9, 2))
    ab = lumped_inner_product(p, a, b)
    assert ab == pytest.approx(lumped_inner_product(p, b, a), abs=1e-14)
    oracle = brute_lumped(p, [[a[j], a[(j + 1) % 9]] for j in range(9)], [[b[j], b[(j + 1) % 9]] for j in range(9)])
    assert ab == pytest.approx(oracle, abs=1e-13)


def test_unit_square_area_and_orientation():
    sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert enclosed_area(InterfacePolygon(sq)) == 1.0
    assert enclosed_area(InterfacePolygon(sq[::-1])) == -1.0
    with pytest.raises(GeometricError):
        check_assumptions(InterfacePolygon(sq[::-1]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 25))
def test_convex_hull_area_dominates(seed, k):
    p = star_polygon(np.random.default_rng(seed), k)
    assert ConvexHull(p.points).volume >= enclosed_area(p) - 1e-14


def test_mesh_quality_two_lengths():
    p = InterfacePolygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 2.0], [0.0, 2.0]]))
    assert mesh_quality(p) == (2.0, 2.0)


def test_check_assumptions_failures():
    dom = Domain((-1.0, 1.0, -1.0, 1.0))
    check_assumptions(make_circle((0, 0), 0.5, 16), dom)
    with pytest.raises(GeometricError):
        check_assumptions(make_circle((0.8, 0), 0.5, 16), dom)
    bow = InterfacePolygon(np.array([[0.0, 0.0], [0.5, 0.5], [0.5, 0.0], [0.0, 0.5]]))
    with pytest.raises(GeometricError):
        check_assumptions(bow)
    dup = InterfacePolygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(GeometricError):
        check_assumptions(dup)


def test_taylor_deformation():
    assert taylor_deformation(make_circle((0, 0), 1.0, 256)) == pytest.approx(0.0, abs=1e-12)
    assert taylor_deformation(make_ellipse((0.3, 0), 2.0, 1.0, 512)) == pytest.approx(1 / 3, abs=1e-4)
    assert taylor_deformation(make_ellipse((0, 0), 1.0, 2.0, 512)) == pytest.approx(1 / 3, abs=1e-4)


def test_polyline_exports(tmp_path):
    p = make_circle((0, 0), 1.0, 5)
    write_polyline_csv(p, tmp_path / "a.csv", {"psi": np.ones(5)})
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "x,y,psi" and len(rows) == 6
    write_polyline_vtk(p, tmp_path / "a.vtk", {"psi": np.ones(5)})
    text = (tmp_path / "a.vtk").read_text()
    assert "LINES 1 7" in text and "6 0 1 2 3 4 0" in text
