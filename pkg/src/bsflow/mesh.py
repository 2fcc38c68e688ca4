"""Bulk triangulations: uniform construction, adaptive bisection, element
classification against the interface and piecewise constant coefficients.

Triangles are stored counterclockwise as ``(p0, p1, p2)`` with ``p2`` the
newest vertex, so ``(p0, p1)`` is the refinement edge used by newest
vertex bisection.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo

INTERIOR = -1
INTERFACIAL = 0
EXTERIOR = 1

DIRICHLET = 1
FREE_SLIP = 2

SIDES = ("left", "right", "bottom", "top")

_generation = itertools.count(1)


class GeometricError(RuntimeError):
    """Degenerate or self-intersecting interface, or interface leaving Omega."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle, optionally minus an axis-aligned hole.

    Parameters
    ----------
    box : (x0, x1, y0, y1)
    hole : (x0, x1, y0, y1) or None
    free_slip : sides of the outer box carrying ``u.n = 0``; every other
        boundary part (including the hole) is Dirichlet.
    """

    box: tuple
    hole: Optional[tuple] = None
    free_slip: tuple = ()

    def __post_init__(self):
        x0, x1, y0, y1 = self.box
        if not (x1 > x0 and y1 > y0):
            raise ValueError("unsupported domain: empty box")
        if self.hole is not None:
            hx0, hx1, hy0, hy1 = self.hole
            if not (x0 < hx0 < hx1 < x1 and y0 < hy0 < hy1 < y1):
                raise ValueError("unsupported domain: hole must lie strictly inside the box")
        for s in self.free_slip:
            if s not in SIDES:
                raise ValueError(f"unknown side {s!r}")

    @property
    def half_widths(self):
        x0, x1, y0, y1 = self.box
        return 0.5 * (x1 - x0), 0.5 * (y1 - y0)

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.box
        a = (x1 - x0) * (y1 - y0)
        if self.hole is not None:
            hx0, hx1, hy0, hy1 = self.hole
            a -= (hx1 - hx0) * (hy1 - hy0)
        return a

    def mesh_size(self, n: int) -> float:
        """``h = 2 min(H1, H2) / n``."""
        return 2.0 * min(self.half_widths) / n

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        x0, x1, y0, y1 = self.box
        x, y = pts[:, 0], pts[:, 1]
        ok = (x > x0 - tol) & (x < x1 + tol) & (y > y0 - tol) & (y < y1 + tol)
        if self.hole is not None:
            hx0, hx1, hy0, hy1 = self.hole
            ok &= ~((x > hx0 + tol) & (x < hx1 - tol) & (y > hy0 + tol) & (y < hy1 - tol))
        return ok

    def boundary_tags(self, mid: np.ndarray, h: float):
        """Tag boundary edges by midpoint: ``(tag, normal axis or -1)``."""
        x0, x1, y0, y1 = self.box
        tol = 1e-9 * h
        tag = np.full(len(mid), DIRICHLET)
        axis = np.full(len(mid), -1)
        where = {
            "left": (np.abs(mid[:, 0] - x0) < tol, 0),
            "right": (np.abs(mid[:, 0] - x1) < tol, 0),
            "bottom": (np.abs(mid[:, 1] - y0) < tol, 1),
            "top": (np.abs(mid[:, 1] - y1) < tol, 1),
        }
        for side in self.free_slip:
            on, ax = where[side]
            tag[on] = FREE_SLIP
            axis[on] = ax
        return tag, axis

    def boundary_flux_parts(self):
        """Names of the boundary components (outer box, hole)."""
        return ("outer",) if self.hole is None else ("outer", "hole")


@dataclass(eq=False)
class BulkMesh:
    """Conforming triangulation with lazily derived connectivity.

    Attributes
    ----------
    vertices : (nV, 2) float array
    triangles : (nT, 3) int array, counterclockwise, refinement edge first
    domain : Domain
    generation : int
        Unique per constructed mesh; fields remember it to detect staleness.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    domain: Domain
    generation: int = field(default_factory=lambda: next(_generation))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        return geo.triangle_areas(self.vertices, self.triangles)

    @cached_property
    def sizes(self) -> np.ndarray:
        """Per-triangle size ``sqrt(2 |T|)``, the leg of a right isosceles triangle."""
        return np.sqrt(2.0 * self.areas)

    @cached_property
    def diameters(self) -> np.ndarray:
        tv = self.vertices[self.triangles]
        e = tv - np.roll(tv, -1, axis=1)
        return np.sqrt((e**2).sum(axis=2)).max(axis=1)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def _edge_data(self):
        t = self.triangles
        # local edge k is opposite local vertex k
        pairs = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        srt = np.sort(pairs, axis=1)
        edges, inv, counts = np.unique(srt, axis=0, return_inverse=True, return_counts=True)
        return edges, inv.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges ``(nE, 2)`` with sorted vertex indices."""
        return self._edge_data[0]

    @property
    def tri_edges(self) -> np.ndarray:
        """Edge index of the local edge opposite each local vertex."""
        return self._edge_data[1]

    @cached_property
    def neighbors(self) -> np.ndarray:
        """Triangle across local edge k, or -1 on the boundary."""
        te = self.tri_edges.ravel()
        tri = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(te, kind="stable")
        te_s, tri_s = te[order], tri[order]
        other = np.full(len(te), -1)
        same = te_s[1:] == te_s[:-1]
        i = np.nonzero(same)[0]
        other[order[i]] = tri_s[i + 1]
        other[order[i + 1]] = tri_s[i]
        return other.reshape(-1, 3)

    @cached_property
    def boundary(self):
        """``(edge ids, tags, normal axes)`` of boundary edges."""
        edges, _, counts = self._edge_data
        ids = np.nonzero(counts == 1)[0]
        mid = self.vertices[edges[ids]].mean(axis=1)
        tag, axis = self.domain.boundary_tags(mid, float(self.sizes.min()))
        return ids, tag, axis

    @cached_property
    def locator(self) -> geo.TriangleLocator:
        return geo.TriangleLocator(self.vertices, self.triangles)

    def same_as(self, other: "BulkMesh") -> bool:
        return other is self or (
            self.vertices.shape == other.vertices.shape
            and self.triangles.shape == other.triangles.shape
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.vertices, other.vertices)
        )


def build_uniform_mesh(domain: Domain, n: int) -> BulkMesh:
    """Uniform right-triangle mesh with ``h = 2 min(H1, H2) / n``.

    Squares of side ``h`` are split along alternating diagonals; the
    diagonal is the refinement edge of both halves.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    x0, x1, y0, y1 = domain.box
    h = domain.mesh_size(n)
    nx = int(round((x1 - x0) / h))
    ny = int(round((y1 - y0) / h))
    if abs(nx * h - (x1 - x0)) > 1e-9 * h or abs(ny * h - (y1 - y0)) > 1e-9 * h:
        raise ValueError("unsupported domain: box sides are not multiples of h")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    keep_cell = np.ones((nx, ny), dtype=bool)
    if domain.hole is not None:
        hx0, hx1, hy0, hy1 = domain.hole
        for v, grid in ((hx0, xs), (hx1, xs), (hy0, ys), (hy1, ys)):
            if np.min(np.abs(grid - v)) > 1e-9 * h:
                raise ValueError("unsupported domain: hole corners must be grid points")
        cx = 0.5 * (xs[:-1] + xs[1:])
        cy = 0.5 * (ys[:-1] + ys[1:])
        keep_cell = ~(((cx > hx0) & (cx < hx1))[:, None] & ((cy > hy0) & (cy < hy1))[None, :])
    vid = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    I, J = np.nonzero(keep_cell)
    v00, v10, v01, v11 = vid[I, J], vid[I + 1, J], vid[I, J + 1], vid[I + 1, J + 1]
    even = (I + J) % 2 == 0
    t1 = np.where(even[:, None], np.column_stack([v00, v11, v01]), np.column_stack([v10, v01, v00]))
    t2 = np.where(even[:, None], np.column_stack([v11, v00, v10]), np.column_stack([v01, v10, v11]))
    tris = np.stack([t1, t2], axis=1).reshape(-1, 3)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    used = np.unique(tris)
    remap = np.full(len(verts), -1)
    remap[used] = np.arange(len(used))
    return BulkMesh(verts[used], remap[tris], domain)


def refine(mesh: BulkMesh, marked: np.ndarray, max_sweeps: int = 200) -> BulkMesh:
    """Newest vertex bisection of the marked triangles with conforming closure.

    Each sweep bisects every flagged triangle once; triangles left with a
    hanging midpoint on one of their edges are flagged for the next sweep.
    """
    verts = [mesh.vertices]
    nv = mesh.n_vertices
    tris = mesh.triangles.copy()
    flag = np.asarray(marked, dtype=bool).copy()
    mid_keys = np.zeros(0, dtype=np.int64)
    mid_ids = np.zeros(0, dtype=np.int64)
    big = np.int64(1) << 31

    def keys(a, b):
        return np.minimum(a, b).astype(np.int64) * big + np.maximum(a, b)

    for _ in range(max_sweeps):
        if not flag.any():
            break
        sel = tris[flag]
        k = keys(sel[:, 0], sel[:, 1])
        uk, inv = np.unique(k, return_inverse=True)
        pos = np.searchsorted(mid_keys, uk)
        pos_c = np.minimum(pos, max(len(mid_keys) - 1, 0))
        known = (len(mid_keys) > 0) & (mid_keys[pos_c] == uk) if len(mid_keys) else np.zeros(len(uk), bool)
        ids = np.empty(len(uk), dtype=np.int64)
        ids[known] = mid_ids[pos_c[known]]
        new = ~known
        nn = int(new.sum())
        if nn:
            a = uk[new] // big
            b = uk[new] % big
            allv = np.concatenate(verts)
            verts.append(0.5 * (allv[a] + allv[b]))
            ids[new] = nv + np.arange(nn)
            nv += nn
            mid_keys = np.concatenate([mid_keys, uk[new]])
            mid_ids = np.concatenate([mid_ids, ids[new]])
            o = np.argsort(mid_keys)
            mid_keys, mid_ids = mid_keys[o], mid_ids[o]
        m = ids[inv]
        c1 = np.column_stack([sel[:, 2], sel[:, 0], m])
        c2 = np.column_stack([sel[:, 1], sel[:, 2], m])
        tris = np.concatenate([tris[~flag], np.stack([c1, c2], axis=1).reshape(-1, 3)])
        # hanging nodes: any edge that has been bisected
        ek = np.concatenate(
            [keys(tris[:, 0], tris[:, 1]), keys(tris[:, 1], tris[:, 2]), keys(tris[:, 2], tris[:, 0])]
        ).reshape(3, -1)
        flag = np.isin(ek, mid_keys).any(axis=0)
    else:
        raise RuntimeError("refinement failed to terminate")
    # canonical ordering keeps results independent of the sweep history
    order = np.lexsort(tris.T[::-1])
    return BulkMesh(np.concatenate(verts), tris[order], mesh.domain)


def band_marker(mesh: BulkMesh, polygon: np.ndarray, width: float) -> np.ndarray:
    """Triangles within ``width`` of some polygon segment."""
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    bc = mesh.barycenters
    rad = np.sqrt(((mesh.vertices[mesh.triangles] - bc[:, None, :]) ** 2).sum(axis=2)).max(axis=1)
    lo = polygon.min(axis=0) - width
    hi = polygon.max(axis=0) + width
    near_box = np.all((bc + rad[:, None] >= lo) & (bc - rad[:, None] <= hi), axis=1)
    out = np.zeros(mesh.n_triangles, dtype=bool)
    idx = np.nonzero(near_box)[0]
    for chunk in np.array_split(idx, max(1, len(idx) // 2000 + 1)):
        if len(chunk):
            d = geo.point_segment_distance(bc[chunk], a, b).min(axis=1)
            out[chunk] = d <= width + rad[chunk]
    return out


def adapt_mesh(
    mesh: BulkMesh,
    polygon: np.ndarray,
    n_fine: int,
    n_coarse: int,
    max_levels: int = 64,
) -> BulkMesh:
    """Rebuild the mesh from the coarse uniform mesh, refining near the interface.

    Every triangle within one fine mesh size of the polygon ends up with
    size ``sqrt(2|T|) <= h_f``; elsewhere the mesh is as coarse as the
    conforming closure allows.  The result depends only on the polygon,
    so repeating the call with an unchanged interface is idempotent.
    """
    if not (n_fine >= n_coarse >= 1):
        raise ValueError("need n_fine >= n_coarse >= 1")
    domain = mesh.domain
    hf = domain.mesh_size(n_fine)
    out = build_uniform_mesh(domain, n_coarse)
    for _ in range(max_levels):
        big = out.sizes > hf * (1 + 1e-9)
        if not big.any():
            break
        marked = np.zeros(out.n_triangles, dtype=bool)
        marked[big] = band_marker_subset(out, polygon, hf, big)
        if not marked.any():
            break
        out = refine(out, marked)
    else:
        raise RuntimeError("adaptive refinement failed to terminate")
    return out


def band_marker_subset(mesh: BulkMesh, polygon: np.ndarray, width: float, subset: np.ndarray):
    full = band_marker(mesh, polygon, width)
    return full[subset]


@dataclass(frozen=True)
class ElementClassification:
    """Per-triangle labels ``INTERIOR``, ``EXTERIOR`` or ``INTERFACIAL``."""

    labels: np.ndarray
    generation: int

    @property
    def interior(self) -> np.ndarray:
        return self.labels == INTERIOR

    @property
    def exterior(self) -> np.ndarray:
        return self.labels == EXTERIOR

    @property
    def interfacial(self) -> np.ndarray:
        return self.labels == INTERFACIAL


def classify_elements(mesh: BulkMesh, polygon: np.ndarray) -> ElementClassification:
    """Label triangles against a closed counterclockwise polygon.

    A triangle is interfacial when some polygon segment passes through its
    open interior; the rest are labeled by a winding-number test of their
    barycenter.
    """
    if geo.polygon_self_intersects(polygon):
        raise GeometricError("interface polygon self-intersects")
    b = np.roll(polygon, -1, axis=0)
    _, tri, _, _, _, on_edge = geo.segment_triangle_pieces(mesh.locator, polygon, b)
    labels = np.where(geo.winding_inside(mesh.barycenters, polygon), INTERIOR, EXTERIOR)
    labels[np.unique(tri[~on_edge])] = INTERFACIAL
    return ElementClassification(labels.astype(np.int8), mesh.generation)


def piecewise_coefficients(classification: ElementClassification, params):
    """P0 density and viscosity: phase values, averaged on interfacial triangles."""
    lab = classification.labels

    def pick(minus, plus):
        return np.where(lab == INTERIOR, minus, np.where(lab == EXTERIOR, plus, 0.5 * (minus + plus)))

    return pick(params.rho_minus, params.rho_plus), pick(params.mu_minus, params.mu_plus)


def _subsample_points() -> np.ndarray:
    pts = []
    for i in range(3):
        for j in range(3 - i):
            pts.append(((i + 1 / 3) / 3, (j + 1 / 3) / 3))
    for i in range(2):
        for j in range(2 - i):
            pts.append(((i + 2 / 3) / 3, (j + 2 / 3) / 3))
    pts = np.array(pts)
    return np.column_stack([1.0 - pts.sum(axis=1), pts])


SUBSAMPLE_BARY = _subsample_points()


def project_p0(old: BulkMesh, values: np.ndarray, new: BulkMesh) -> np.ndarray:
    """Overlap-weighted mean of a P0 field on ``new``, by 9-point subsampling."""
    if new.same_as(old):
        return np.array(values, dtype=float, copy=True)
    tv = new.vertices[new.triangles]
    pts = np.einsum("sk,tkd->tsd", SUBSAMPLE_BARY, tv).reshape(-1, 2)
    tri, _ = old.locator.locate(pts)
    return np.asarray(values)[tri].reshape(new.n_triangles, -1).mean(axis=1)


def write_vtk(mesh: BulkMesh, path, cell_data: Optional[dict] = None, point_data: Optional[dict] = None):
    """Legacy ASCII VTK unstructured grid with optional cell/point scalars."""
    lines = ["# vtk DataFile Version 3.0", "bulk mesh", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines += ["5"] * mesh.n_triangles
    for kind, data, n in (("CELL_DATA", cell_data, mesh.n_triangles), ("POINT_DATA", point_data, mesh.n_vertices)):
        if data:
            lines.append(f"{kind} {n}")
            for name, vals in data.items():
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines += [f"{float(v):.17g}" for v in vals]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
