"""Bulk finite element spaces on a :class:`~bsflow.mesh.BulkMesh`.

Velocity is continuous P2 with nodes at vertices and edge midpoints; the
pressure is continuous P1 on the vertices, optionally enriched by the
characteristic function of the inner phase.  Vector coefficient vectors
are component-blocked: ``[u_x at all nodes, u_y at all nodes]``.

Local P2 ordering on a triangle ``(v0, v1, v2)`` is the three vertices
followed by the midpoints of the edges opposite ``v0``, ``v1``, ``v2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import geometry as geo
from .mesh import DIRICHLET, FREE_SLIP, INTERFACIAL, INTERIOR, BulkMesh, ElementClassification


class StaleMeshError(RuntimeError):
    """A field was used with a mesh other than the one it is bound to."""


def _gauss7():
    s = np.sqrt(15.0)
    a1, b1 = (6 - s) / 21, (9 + 2 * s) / 21
    a2, b2 = (6 + s) / 21, (9 - 2 * s) / 21
    w1, w2 = (155 - s) / 1200, (155 + s) / 1200
    bary = [(1 / 3, 1 / 3, 1 / 3)]
    w = [9 / 40]
    for a, b, wi in ((a1, b1, w1), (a2, b2, w2)):
        bary += [(b, a, a), (a, b, a), (a, a, b)]
        w += [wi] * 3
    return np.array(bary), np.array(w)


# 7-point rule, exact for degree 5; weights sum to one (multiply by |T|).
QUAD_BARY, QUAD_W = _gauss7()

# Gauss-Legendre on [0, 1]
GL3_X = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
GL3_W = np.array([5 / 18, 8 / 18, 5 / 18])


def p2_basis(lam: np.ndarray) -> np.ndarray:
    """P2 shape functions at barycentric points, shape ``(..., 6)``."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1],
        axis=-1,
    )


def p2_dlambda(lam: np.ndarray) -> np.ndarray:
    """Derivatives of the P2 shape functions w.r.t. ``lambda``, shape ``(..., 6, 3)``."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    z = np.zeros_like(l0)
    rows = [
        (4 * l0 - 1, z, z),
        (z, 4 * l1 - 1, z),
        (z, z, 4 * l2 - 1),
        (z, 4 * l2, 4 * l1),
        (4 * l2, z, 4 * l0),
        (4 * l1, 4 * l0, z),
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


class P2Space:
    """Vector P2 space with boundary bookkeeping and cached geometry."""

    def __init__(self, mesh: BulkMesh):
        self.mesh = mesh
        self.generation = mesh.generation
        nv = mesh.n_vertices
        self.n_nodes = nv + len(mesh.edges)
        self.dofmap = np.column_stack([mesh.triangles, nv + mesh.tri_edges])
        _, inv = geo.barycentric_maps(mesh.vertices, mesh.triangles)
        g12 = inv  # rows are grad(lambda1), grad(lambda2)
        self.grad_lambda = np.stack([-g12.sum(axis=1), g12[:, 0], g12[:, 1]], axis=1)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @cached_property
    def nodes(self) -> np.ndarray:
        m = self.mesh
        return np.concatenate([m.vertices, m.vertices[m.edges].mean(axis=1)])

    @cached_property
    def constraints(self):
        """``(dirichlet nodes, slip nodes, slip axes)``.

        Nodes on a Dirichlet edge are fully prescribed; the remaining nodes
        of free-slip edges have only their normal component fixed.
        """
        m = self.mesh
        ids, tag, axis = m.boundary
        ed = m.edges[ids]
        mid = m.n_vertices + ids
        dn = np.unique(np.concatenate([ed[tag == DIRICHLET].ravel(), mid[tag == DIRICHLET]]))
        slip = tag == FREE_SLIP
        sn = np.concatenate([ed[slip, 0], ed[slip, 1], mid[slip]])
        sa = np.concatenate([axis[slip], axis[slip], axis[slip]])
        keep = ~np.isin(sn, dn)
        sn, first = np.unique(sn[keep], return_index=True)
        return dn, sn, sa[keep][first]

    def fixed_dofs(self):
        """Velocity DOF indices fixed by boundary conditions."""
        dn, sn, sa = self.constraints
        return np.unique(np.concatenate([dn, dn + self.n_nodes, sn + sa * self.n_nodes]))

    def check(self, mesh: BulkMesh) -> None:
        if mesh.generation != self.generation:
            raise StaleMeshError("space bound to a different mesh generation")

    @cached_property
    def quad_grads(self) -> np.ndarray:
        """Shape-function gradients at the quadrature points, ``(nT, q, 6, 2)``."""
        d = p2_dlambda(QUAD_BARY)  # (q, 6, 3)
        return np.einsum("qaj,tjd->tqad", d, self.grad_lambda)

    def locate(self, points: np.ndarray):
        return self.mesh.locator.locate(points)

    def evaluation_matrix(self, points: np.ndarray) -> sp.csr_matrix:
        """Sparse ``(n_points, n_nodes)`` matrix of shape-function values."""
        tri, lam = self.locate(points)
        vals = p2_basis(lam)
        rows = np.repeat(np.arange(len(points)), 6)
        return sp.csr_matrix((vals.ravel(), (rows, self.dofmap[tri].ravel())), shape=(len(points), self.n_nodes))


@dataclass
class FEFunction:
    """Coefficients of a P2 vector field bound to one mesh generation."""

    space: P2Space
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError("coefficient length does not match the space")

    @property
    def mesh(self) -> BulkMesh:
        return self.space.mesh

    def nodal(self) -> np.ndarray:
        """Node values ``(n_nodes, 2)``."""
        return self.coeffs.reshape(2, -1).T

    def evaluate(self, tri: np.ndarray, lam: np.ndarray, mesh: BulkMesh | None = None) -> np.ndarray:
        """Values at barycentric points of given triangles, shape ``(n, 2)``."""
        if mesh is not None:
            self.space.check(mesh)
        phi = p2_basis(np.atleast_2d(lam))
        nod = self.nodal()[self.space.dofmap[np.atleast_1d(tri)]]  # (n, 6, 2)
        return np.einsum("na,nad->nd", phi, nod)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        tri, lam = self.space.locate(np.atleast_2d(points))
        return self.evaluate(tri, lam)


def interpolate_I2(space: P2Space, field: Callable[[np.ndarray], np.ndarray]) -> FEFunction:
    """Nodal P2 interpolant of ``field(points) -> (n, 2)``."""
    vals = np.asarray(field(space.nodes), dtype=float)
    return FEFunction(space, vals.T.ravel())


def transfer(fun: FEFunction, space: P2Space) -> FEFunction:
    """Nodal interpolation of a P2 function from its mesh onto ``space``."""
    if space.mesh.same_as(fun.mesh):
        return FEFunction(space, fun.coeffs.copy())
    return interpolate_I2(space, fun)


def divergence_matrix(space: P2Space):
    """Divergence block ``B[p, (r, a)] = (lambda_p, d_r phi_a)`` on P1 x P2."""
    mesh = space.mesh
    grads = space.quad_grads  # (nT, q, 6, 2)
    w = QUAD_W[None, :] * mesh.areas[:, None]  # (nT, q)
    loc = np.einsum("tq,qp,tqad->tpda", w, QUAD_BARY, grads)  # (nT, 3, 2, 6)
    rows = np.broadcast_to(mesh.triangles[:, :, None, None], loc.shape)
    cols = space.dofmap[:, None, None, :] + np.arange(2)[None, None, :, None] * space.n_nodes
    cols = np.broadcast_to(cols, loc.shape)
    return sp.csr_matrix(
        (loc.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.n_vertices, space.n_dofs)
    )


def p1_integrals(mesh: BulkMesh) -> np.ndarray:
    """``(lambda_p, 1)`` for every vertex."""
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return out


def xfem_volume_column(
    space: P2Space, polygon: np.ndarray, classification: ElementClassification
) -> tuple[np.ndarray, float]:
    """Entries ``(div phi_i, chi_{Omega_-})`` and the measure of ``Omega_- cap Omega``.

    Interior triangles contribute their full integral; interfacial ones
    are clipped against the polygon and integrated exactly, since the
    divergence of a P2 function is affine on each triangle.
    """
    mesh = space.mesh
    if classification.generation != mesh.generation:
        raise StaleMeshError("classification belongs to a different mesh")
    col = np.zeros(space.n_dofs)
    inner = np.nonzero(classification.labels == INTERIOR)[0]
    cut = np.nonzero(classification.labels == INTERFACIAL)[0]
    centroid_lam = np.full((1, 3), 1.0 / 3.0)
    area = float(mesh.areas[inner].sum())
    tris, lams, wts = [inner], [np.repeat(centroid_lam, len(inner), axis=0)], [mesh.areas[inner]]
    origin, inv = geo.barycentric_maps(mesh.vertices, mesh.triangles[cut]) if len(cut) else (None, None)
    for i, t in enumerate(cut):
        piece = geo.clip_polygon_triangle(polygon, mesh.vertices[mesh.triangles[t]])
        a, c = geo.polygon_area_centroid(piece)
        if a <= 1e-14 * mesh.areas[t]:
            continue
        area += a
        tris.append(np.array([t]))
        lams.append(geo.barycentric(c[None], origin[i : i + 1], inv[i : i + 1]))
        wts.append(np.array([a]))
    tri = np.concatenate(tris)
    lam = np.concatenate(lams)
    wt = np.concatenate(wts)
    dl = p2_dlambda(lam)  # (n, 6, 3)
    grads = np.einsum("naj,njd->nda", dl, space.grad_lambda[tri]) * wt[:, None, None]  # (n, 2, 6)
    idx = space.dofmap[tri][:, None, :] + np.arange(2)[None, :, None] * space.n_nodes
    np.add.at(col, idx.ravel(), grads.ravel())
    return col, area


@dataclass
class InterfaceQuadrature:
    """Gauss points on the pieces of each interface segment inside mesh triangles.

    ``seg`` and ``tri`` give the segment and triangle of every point,
    ``s`` the parameter along the segment, ``w`` the weight including the
    segment length, and ``phi`` the P2 shape-function values.
    """

    seg: np.ndarray
    tri: np.ndarray
    s: np.ndarray
    w: np.ndarray
    phi: np.ndarray


def interface_quadrature(space: P2Space, q: np.ndarray, qn: np.ndarray, lengths: np.ndarray) -> InterfaceQuadrature:
    seg, tri, t0, t1, weight, _ = geo.segment_triangle_pieces(space.mesh.locator, q, qn)
    s = t0[:, None] + (t1 - t0)[:, None] * GL3_X[None, :]
    w = (weight * (t1 - t0) * lengths[seg])[:, None] * GL3_W[None, :]
    x = q[seg][:, None, :] + s[..., None] * (qn - q)[seg][:, None, :]
    n = len(seg)
    m = space.mesh
    origin, inv = geo.barycentric_maps(m.vertices, m.triangles[tri])
    lam = np.einsum("nij,nkj->nki", inv, x - origin[:, None, :])
    lam = np.concatenate([1.0 - lam.sum(axis=2, keepdims=True), lam], axis=2)
    phi = p2_basis(lam)  # (n, 3, 6)
    rep = lambda a: np.repeat(a, 3)
    return InterfaceQuadrature(rep(seg), rep(tri), s.ravel(), w.ravel(), phi.reshape(3 * n, 6))


def interface_normal_matrix(space: P2Space, polygon) -> sp.csr_matrix:
    """Exact coupling ``N[(r, a), k] = <chi_k nu_r, phi_a>_Gamma``.

    The integrand is piecewise cubic along the polygon once segments are
    split at mesh edges, so 3-point Gauss on every piece is exact.
    """
    qd = interface_quadrature(space, polygon.points, polygon.next_points, polygon.lengths)
    k = polygon.n
    chi = np.stack([1.0 - qd.s, qd.s], axis=1)  # hats of segment start/end vertex
    vert = np.stack([qd.seg, (qd.seg + 1) % k], axis=1)
    nu = polygon.normals[qd.seg]  # (n, 2)
    # value[point, end, r, a]
    val = qd.w[:, None, None, None] * chi[:, :, None, None] * nu[:, None, :, None] * qd.phi[:, None, None, :]
    rows = space.dofmap[qd.tri][:, None, None, :] + np.arange(2)[None, None, :, None] * space.n_nodes
    rows = np.broadcast_to(rows, val.shape)
    cols = np.broadcast_to(vert[:, :, None, None], val.shape)
    return sp.csr_matrix((val.ravel(), (rows.ravel(), cols.ravel())), shape=(space.n_dofs, k))


def xfem_flux_column(space: P2Space, polygon) -> np.ndarray:
    """``<phi_i, nu>_Gamma``; equals the volume column when Omega_- avoids the boundary."""
    return np.asarray(interface_normal_matrix(space, polygon).sum(axis=1)).ravel()
