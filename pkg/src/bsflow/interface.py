"""Closed interface polygons and their mass-lumped surface calculus.

Vertices are ordered counterclockwise.  Segment ``j`` runs from vertex
``j`` to vertex ``j + 1`` (cyclically), its unit normal points out of the
enclosed phase, and all nodal fields on consecutive time levels share
the same vertex indexing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import geometry as geo
from .mesh import GeometricError


@dataclass(eq=False)
class InterfacePolygon:
    """Counterclockwise closed polygon with derived segment data."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) < 3:
            raise ValueError("an interface needs at least three planar vertices")

    @property
    def n(self) -> int:
        return len(self.points)

    @cached_property
    def next_points(self) -> np.ndarray:
        return np.roll(self.points, -1, axis=0)

    @cached_property
    def edges(self) -> np.ndarray:
        """Edge vectors ``q_{j+1} - q_j``."""
        return self.next_points - self.points

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.hypot(self.edges[:, 0], self.edges[:, 1])

    @cached_property
    def tangents(self) -> np.ndarray:
        return self.edges / self.lengths[:, None]

    @cached_property
    def normals(self) -> np.ndarray:
        """Outward unit normals ``(t_y, -t_x)``."""
        t = self.tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    @cached_property
    def vertex_weights(self) -> np.ndarray:
        """Lumped mass ``m_k = (|sigma_{k-1}| + |sigma_k|) / 2``."""
        return 0.5 * (self.lengths + np.roll(self.lengths, 1))

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Length-weighted average of the two adjacent segment normals."""
        w = self.lengths[:, None] * self.normals
        return (w + np.roll(w, 1, axis=0)) / (2.0 * self.vertex_weights[:, None])

    @property
    def h(self) -> float:
        return float(self.lengths.max())

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    def moved(self, displacement: np.ndarray) -> "InterfacePolygon":
        return InterfacePolygon(self.points + displacement)


def make_circle(center, radius: float, k_gamma: int, phase: float = 0.0) -> InterfacePolygon:
    """Regular ``k_gamma``-gon inscribed in a circle, first vertex at ``phase``."""
    if k_gamma < 3 or radius <= 0:
        raise ValueError("need k_gamma >= 3 and radius > 0")
    ang = phase + 2.0 * np.pi * np.arange(k_gamma) / k_gamma
    return InterfacePolygon(np.asarray(center, float) + radius * np.column_stack([np.cos(ang), np.sin(ang)]))


def make_ellipse(center, a: float, b: float, k_gamma: int) -> InterfacePolygon:
    """Polygon on an ellipse with semi-axes ``a`` (x) and ``b`` (y), uniform in angle."""
    ang = 2.0 * np.pi * np.arange(k_gamma) / k_gamma
    return InterfacePolygon(np.asarray(center, float) + np.column_stack([a * np.cos(ang), b * np.sin(ang)]))


def vertex_normals(polygon: InterfacePolygon) -> np.ndarray:
    return polygon.vertex_normals


def lumped_inner_product(polygon: InterfacePolygon, eta, zeta, endpoint: bool = False) -> float:
    """Mass-lumped inner product ``1/2 sum_j |sigma_j| sum_k (eta zeta)(q_{j_k}^-)``.

    By default ``eta`` and ``zeta`` are nodal values, shape ``(K,)`` or
    ``(K, 2)``.  With ``endpoint=True`` they are one-sided values per
    segment, shape ``(K, 2)`` or ``(K, 2, 2)`` indexed ``[segment, end,
    component]``, as needed for piecewise constant data.  Vector data are
    contracted with the dot product; scalars broadcast.
    """

    def ends(v):
        v = np.asarray(v, dtype=float)
        if v.ndim == 0:
            v = np.full(polygon.n, float(v))
        if endpoint and v.shape[:2] == (polygon.n, 2):
            return v
        return np.stack([v, np.roll(v, -1, axis=0)], axis=1)

    prod = ends(eta) * ends(zeta)
    if prod.ndim == 3:
        prod = prod.sum(axis=2)
    return float(0.5 * np.dot(polygon.lengths, prod.sum(axis=1)))


def enclosed_area(polygon: InterfacePolygon, check: bool = False) -> float:
    """Shoelace area, positive for counterclockwise orientation."""
    if check and geo.polygon_self_intersects(polygon.points):
        raise GeometricError("interface polygon self-intersects")
    q, qn = polygon.points, polygon.next_points
    return float(0.5 * np.sum(q[:, 0] * qn[:, 1] - qn[:, 0] * q[:, 1]))


def mesh_quality(polygon: InterfacePolygon):
    """``(max edge / min edge, h_Gamma)``."""
    L = polygon.lengths
    return float(L.max() / L.min()), float(L.max())


def taylor_deformation(polygon: InterfacePolygon) -> float:
    """``(L - B) / (L + B)`` of the ellipse with the same second area moments."""
    q, qn = polygon.points, polygon.next_points
    cr = q[:, 0] * qn[:, 1] - qn[:, 0] * q[:, 1]
    a = 0.5 * cr.sum()
    cx = ((q[:, 0] + qn[:, 0]) * cr).sum() / (6 * a)
    cy = ((q[:, 1] + qn[:, 1]) * cr).sum() / (6 * a)
    x, y = q[:, 0] - cx, q[:, 1] - cy
    xn, yn = qn[:, 0] - cx, qn[:, 1] - cy
    cr = x * yn - xn * y
    ixx = ((y * y + y * yn + yn * yn) * cr).sum() / 12.0
    iyy = ((x * x + x * xn + xn * xn) * cr).sum() / 12.0
    ixy = ((x * yn + 2 * x * y + 2 * xn * yn + xn * y) * cr).sum() / 24.0
    ev = np.linalg.eigvalsh(np.array([[ixx, ixy], [ixy, iyy]]))
    # semi-axes of an ellipse scale like the square root of its moments
    L, B = np.sqrt(ev[1]), np.sqrt(ev[0])
    return float((L - B) / (L + B))


def check_assumptions(polygon: InterfacePolygon, domain=None, tol_len: float = 1e-14) -> None:
    """Raise :class:`GeometricError` unless the polygon is admissible.

    Checks positive segment lengths, simplicity, containment in the
    domain and that the vertex normals span the plane.
    """
    scale = max(1.0, float(np.abs(polygon.points).max()))
    if np.any(~np.isfinite(polygon.points)):
        raise GeometricError("non-finite interface vertex")
    if polygon.lengths.min() <= tol_len * scale:
        raise GeometricError("degenerate interface segment")
    if enclosed_area(polygon) <= 0:
        raise GeometricError("interface lost its counterclockwise orientation")
    if geo.polygon_self_intersects(polygon.points):
        raise GeometricError("interface polygon self-intersects")
    if domain is not None and not np.all(domain.contains(polygon.points)):
        raise GeometricError("interface left the domain")
    sv = np.linalg.svd(polygon.vertex_normals, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise GeometricError("vertex normals do not span the plane")


def write_polyline_csv(polygon: InterfacePolygon, path, fields: dict | None = None) -> None:
    cols = ["x", "y"] + list(fields or {})
    data = [polygon.points[:, 0], polygon.points[:, 1]] + [np.asarray(v) for v in (fields or {}).values()]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in zip(*data):
            fh.write(",".join(f"{float(v):.17g}" for v in row) + "\n")


def write_polyline_vtk(polygon: InterfacePolygon, path, fields: dict | None = None) -> None:
    """Legacy ASCII VTK polydata with one closed line."""
    k = polygon.n
    lines = ["# vtk DataFile Version 3.0", "interface", "ASCII", "DATASET POLYDATA", f"POINTS {k} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in polygon.points]
    lines.append(f"LINES 1 {k + 2}")
    lines.append(" ".join(str(i) for i in [k + 1, *range(k), 0]))
    if fields:
        lines.append(f"POINT_DATA {k}")
        for name, vals in fields.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{float(v):.17g}" for v in vals]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
