"""Planar geometry kernels shared by the mesh, FE and interface modules.

Everything here is vectorized over points, segments or triangles.
"""

from __future__ import annotations

import numpy as np

BARY_TOL = 1e-12


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Signed areas, positive for counterclockwise triangles."""
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def barycentric_maps(vertices: np.ndarray, triangles: np.ndarray):
    """Affine maps giving barycentric coordinates.

    Returns ``(origin, inv)`` such that ``(l1, l2) = inv @ (x - origin)``
    and ``l0 = 1 - l1 - l2``.
    """
    a = vertices[triangles[:, 0]]
    jac = np.stack(
        [vertices[triangles[:, 1]] - a, vertices[triangles[:, 2]] - a], axis=2
    )  # columns b - a, c - a
    return a, np.linalg.inv(jac)


def barycentric(points: np.ndarray, origin: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``points[i]`` w.r.t. triangle ``i``."""
    l12 = np.einsum("nij,nj->ni", inv, points - origin)
    return np.column_stack([1.0 - l12.sum(axis=1), l12])


class TriangleLocator:
    """Bucket-grid point location in a triangulation.

    Each grid cell lists the triangles whose bounding box overlaps it.  A
    query tests all candidates of its cell and returns the lowest-index
    triangle containing the point, so results are deterministic for points
    on shared edges and vertices.
    """

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        self.vertices = vertices
        self.triangles = triangles
        self.origin, self.inv = barycentric_maps(vertices, triangles)
        tv = vertices[triangles]
        lo = tv.min(axis=1)
        hi = tv.max(axis=1)
        self.lo = vertices.min(axis=0)
        span = vertices.max(axis=0) - self.lo
        size = np.sqrt(np.median(np.abs(triangle_areas(vertices, triangles))) * 2.0)
        self.shape = np.maximum(np.ceil(span / size).astype(int), 1)
        self.cell = span / self.shape
        i0 = self._cell_index(lo - 1e-10 * span.max())
        i1 = self._cell_index(hi + 1e-10 * span.max())
        nx = i1[:, 0] - i0[:, 0] + 1
        ny = i1[:, 1] - i0[:, 1] + 1
        counts = nx * ny
        tri = np.repeat(np.arange(len(triangles)), counts)
        local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cx = i0[tri, 0] + local % nx[tri]
        cy = i0[tri, 1] + local // nx[tri]
        cells = cx * self.shape[1] + cy
        order = np.lexsort((tri, cells))
        self.cell_tris = tri[order]
        self.cell_ptr = np.searchsorted(cells[order], np.arange(self.shape[0] * self.shape[1] + 1))

    def _cell_index(self, pts: np.ndarray) -> np.ndarray:
        idx = np.floor((pts - self.lo) / self.cell).astype(int)
        return np.clip(idx, 0, self.shape - 1)

    def candidates(self, cells: np.ndarray):
        """Padded candidate lists ``(cand, valid)`` for the given cells."""
        start = self.cell_ptr[cells]
        count = self.cell_ptr[cells + 1] - start
        width = max(int(count.max(initial=0)), 1)
        offs = np.arange(width)
        valid = offs[None, :] < count[:, None]
        cand = np.where(valid, start[:, None] + offs[None, :], 0)
        return self.cell_tris[cand] * valid, valid

    def locate(self, points: np.ndarray, tol: float = BARY_TOL):
        """Return ``(triangle ids, barycentric coordinates)``.

        Raises
        ------
        ValueError
            If some point lies outside the triangulation.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        ci = self._cell_index(points)
        cand, valid = self.candidates(ci[:, 0] * self.shape[1] + ci[:, 1])
        p = np.repeat(points[:, None, :], cand.shape[1], axis=1)
        l12 = np.einsum("nkij,nkj->nki", self.inv[cand], p - self.origin[cand])
        lmin = np.minimum(1.0 - l12.sum(axis=2), l12.min(axis=2))
        inside = valid & (lmin >= -tol)
        big = np.iinfo(np.int64).max
        tri = np.where(inside, cand, big).min(axis=1)
        missing = tri == big
        if np.any(missing):
            # Fallback: scan every triangle, keeping the one closest to containing.
            for i in np.nonzero(missing)[0]:
                lam = barycentric(
                    np.repeat(points[i : i + 1], len(self.triangles), axis=0), self.origin, self.inv
                )
                worst = lam.min(axis=1)
                j = int(np.argmax(worst))
                if worst[j] < -1e-9:
                    raise ValueError(f"point {points[i]} lies outside the mesh")
                tri[i] = j
        tri = tri.astype(np.int64)
        lam = barycentric(points, self.origin[tri], self.inv[tri])
        return tri, lam


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance matrix ``(n_points, n_segments)`` to segments ``a -> b``."""
    d = b - a
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    w = points[:, None, :] - a[None, :, :]
    s = np.clip(np.einsum("nkj,kj->nk", w, d) / dd, 0.0, 1.0)
    diff = w - s[..., None] * d[None, :, :]
    return np.sqrt(np.einsum("nkj,nkj->nk", diff, diff))


def winding_inside(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Winding-number inside test for a closed polygon.

    Points are nudged by ``1e-13`` in a fixed generic direction so that
    points on edges or vertices get a deterministic answer.
    """
    pts = np.atleast_2d(points) + 1e-13 * np.array([0.7548776662466927, 0.5698402909980532])
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    ax = a[None, :, 0] - pts[:, None, 0]
    ay = a[None, :, 1] - pts[:, None, 1]
    bx = b[None, :, 0] - pts[:, None, 0]
    by = b[None, :, 1] - pts[:, None, 1]
    cross = ax * by - ay * bx
    up = (ay <= 0) & (by > 0) & (cross > 0)
    down = (ay > 0) & (by <= 0) & (cross < 0)
    wn = up.sum(axis=1) - down.sum(axis=1)
    return wn != 0


def segment_triangle_pieces(locator: TriangleLocator, a: np.ndarray, b: np.ndarray, tol: float = 1e-12):
    """Split segments ``a -> b`` into their pieces inside mesh triangles.

    Returns arrays ``(seg, tri, t0, t1, weight)``: segment ``seg`` meets
    triangle ``tri`` on the parameter interval ``[t0, t1]``.  Pieces lying
    on a shared mesh edge are reported by both neighbours with weight
    ``1/2``, so weighted sums over pieces integrate along each segment
    exactly once.  Zero-length contacts are omitted.
    """
    nseg = len(a)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    i0 = locator._cell_index(lo - 1e-12)
    i1 = locator._cell_index(hi + 1e-12)
    nx = i1[:, 0] - i0[:, 0] + 1
    ny = i1[:, 1] - i0[:, 1] + 1
    counts = nx * ny
    seg = np.repeat(np.arange(nseg), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    cx = i0[seg, 0] + local % nx[seg]
    cy = i0[seg, 1] + local // nx[seg]
    cand, valid = locator.candidates(cx * locator.shape[1] + cy)
    seg = np.repeat(seg, cand.shape[1])[valid.ravel()]
    tri = cand.ravel()[valid.ravel()]
    pairs = np.unique(np.column_stack([seg, tri]), axis=0)
    seg, tri = pairs[:, 0], pairs[:, 1]
    la = barycentric(a[seg], locator.origin[tri], locator.inv[tri])
    lb = barycentric(b[seg], locator.origin[tri], locator.inv[tri])
    dl = lb - la
    t0 = np.zeros(len(seg))
    t1 = np.ones(len(seg))
    with np.errstate(divide="ignore", invalid="ignore"):
        tcut = -la / dl
    enter = dl > 0
    leave = dl < 0
    t0 = np.maximum(t0, np.where(enter, tcut, -np.inf).max(axis=1))
    t1 = np.minimum(t1, np.where(leave, tcut, np.inf).min(axis=1))
    # a parallel constraint that is violated excludes the pair
    flat_out = ((dl == 0) & (la < -tol)).any(axis=1)
    keep = (t1 - t0 > tol) & ~flat_out
    seg, tri, t0, t1 = seg[keep], tri[keep], t0[keep], t1[keep]
    tm = 0.5 * (t0 + t1)
    lm = la[keep] + tm[:, None] * dl[keep]
    on_edge = lm.min(axis=1) < tol
    weight = np.where(on_edge, 0.5, 1.0)
    order = np.lexsort((t0, seg))
    return seg[order], tri[order], t0[order], t1[order], weight[order], on_edge[order]


def clip_polygon_halfplane(poly: np.ndarray, p: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman step: keep the part with ``(x - p).n >= 0``."""
    if len(poly) == 0:
        return poly
    d = (poly - p) @ n
    nxt = np.roll(poly, -1, axis=0)
    dn = np.roll(d, -1)
    keep = d >= 0
    cross = (d >= 0) != (dn >= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = d / (d - dn)
        inter = poly + s[:, None] * (nxt - poly)
    # interleave: current vertex (if kept), then crossing point (if any)
    out = np.empty((2 * len(poly), 2))
    mask = np.empty(2 * len(poly), dtype=bool)
    out[0::2] = poly
    out[1::2] = inter
    mask[0::2] = keep
    mask[1::2] = cross
    return out[mask]


def clip_polygon_triangle(poly: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Clip a (possibly nonconvex) polygon against a CCW triangle."""
    out = poly
    for i in range(3):
        p = tri[i]
        e = tri[(i + 1) % 3] - p
        out = clip_polygon_halfplane(out, p, np.array([-e[1], e[0]]))
        if len(out) < 3:
            return np.zeros((0, 2))
    return out


def polygon_area_centroid(poly: np.ndarray):
    """Signed area and centroid of a closed polygon via the shoelace formula."""
    if len(poly) < 3:
        return 0.0, np.zeros(2)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = 0.5 * cr.sum()
    if abs(area) < 1e-300:
        return 0.0, poly.mean(axis=0)
    cx = ((x + xn) * cr).sum() / (6.0 * area)
    cy = ((y + yn) * cr).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def polygon_self_intersects(q: np.ndarray) -> bool:
    """True if two non-adjacent edges of the closed polygon intersect."""
    k = len(q)
    a = q
    b = np.roll(q, -1, axis=0)
    i, j = np.triu_indices(k, 2)
    keep = ~((i == 0) & (j == k - 1))
    i, j = i[keep], j[keep]

    def orient(p, r, s):
        return (r[:, 0] - p[:, 0]) * (s[:, 1] - p[:, 1]) - (r[:, 1] - p[:, 1]) * (s[:, 0] - p[:, 0])

    o1 = orient(a[i], b[i], a[j])
    o2 = orient(a[i], b[i], b[j])
    o3 = orient(a[j], b[j], a[i])
    o4 = orient(a[j], b[j], b[i])
    hit = (o1 * o2 <= 0) & (o3 * o4 <= 0)
    # collinear, disjoint pairs give zero orientations; confirm by bbox overlap
    coll = (o1 == 0) & (o2 == 0)
    if np.any(hit & coll):
        lo_i = np.minimum(a[i], b[i])
        hi_i = np.maximum(a[i], b[i])
        lo_j = np.minimum(a[j], b[j])
        hi_j = np.maximum(a[j], b[j])
        overlap = np.all((lo_i <= hi_j) & (lo_j <= hi_i), axis=1)
        hit = hit & (~coll | overlap)
    return bool(np.any(hit))
