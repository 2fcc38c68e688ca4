"""Discrete surface calculus on the segments of an interface polygon.

Per-segment functions take a segment's two endpoints and endpoint values
of a P1 field.  The ``*_all`` variants act on every segment of an
:class:`~bsflow.interface.InterfacePolygon` at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interface import InterfacePolygon


@dataclass(frozen=True)
class SegmentFrame:
    """Tangent, outward normal, length, tangential projection and the map ``M``.

    ``M`` has columns ``q2 - q1`` and ``nu``.
    """

    q1: np.ndarray
    q2: np.ndarray

    @property
    def edge(self) -> np.ndarray:
        return np.asarray(self.q2, float) - np.asarray(self.q1, float)

    @property
    def length(self) -> float:
        return float(np.hypot(*self.edge))

    @property
    def tangent(self) -> np.ndarray:
        return self.edge / self.length

    @property
    def normal(self) -> np.ndarray:
        t = self.tangent
        return np.array([t[1], -t[0]])

    @property
    def projection(self) -> np.ndarray:
        nu = self.normal
        return np.eye(2) - np.outer(nu, nu)

    @property
    def map_matrix(self) -> np.ndarray:
        return np.column_stack([self.edge, self.normal])


def surface_gradient(frame: SegmentFrame, values) -> np.ndarray:
    """``((f2 - f1) / L) t`` for a scalar P1 field."""
    f1, f2 = values
    return (f2 - f1) / frame.length * frame.tangent


def vector_surface_gradient(frame: SegmentFrame, values) -> np.ndarray:
    """Full 2x2 matrix ``(grad_s u)_{ij} = d_{s_j} u_i`` of a P1 vector field."""
    u1, u2 = np.asarray(values[0], float), np.asarray(values[1], float)
    return np.outer((u2 - u1) / frame.length, frame.tangent)


def rate_of_deformation(frame: SegmentFrame, values):
    """``(D_s, div_s, D_s - div_s P)`` for a P1 vector field on one segment."""
    g = vector_surface_gradient(frame, values)
    P = frame.projection
    D = 0.5 * P @ (g + g.T) @ P
    div = float(np.trace(P @ g))
    return D, div, D - div * P


def xi_matrix(frame: SegmentFrame, z) -> np.ndarray:
    """``(M^T)^{-1} diag((z1 + z2)/2, 0) M^T``, so that ``Xi grad_s z = grad_s pi[z^2] / 2``."""
    M = frame.map_matrix
    lam = np.diag([0.5 * (z[0] + z[1]), 0.0])
    return np.linalg.solve(M.T, lam @ M.T)


def rho_star(polygon: InterfacePolygon, rho_gamma: np.ndarray) -> np.ndarray:
    """Segment mean of ``rho_gamma`` where it is nonnegative at both ends, else 0."""
    a = np.asarray(rho_gamma, float)
    b = np.roll(a, -1)
    return np.where(np.minimum(a, b) >= 0.0, 0.5 * (a + b), 0.0)


# ---------------------------------------------------------------- vectorized


def surface_gradient_all(polygon: InterfacePolygon, f: np.ndarray) -> np.ndarray:
    """Per-segment surface gradients of a nodal scalar field, ``(K, 2)``."""
    df = np.roll(f, -1) - f
    return (df / polygon.lengths)[:, None] * polygon.tangents


def hat_gradients(polygon: InterfacePolygon) -> np.ndarray:
    """``grad_s chi`` of the start and end vertex hats per segment, ``(K, 2, 2)``."""
    g = polygon.tangents / polygon.lengths[:, None]
    return np.stack([-g, g], axis=1)


def xi_matrices(polygon: InterfacePolygon, z: np.ndarray) -> np.ndarray:
    """``Xi`` for every segment from nodal values ``z``, shape ``(K, 2, 2)``."""
    M = np.stack([polygon.edges, polygon.normals], axis=2)  # columns edge, normal
    MT = np.transpose(M, (0, 2, 1))
    lam = np.zeros_like(M)
    lam[:, 0, 0] = 0.5 * (z + np.roll(z, -1))
    return np.linalg.solve(MT, lam @ MT)


def laplace_matrix(polygon: InterfacePolygon):
    """Stiffness ``<grad_s chi_i, grad_s chi_j>`` (cyclic tridiagonal, sparse)."""
    import scipy.sparse as sp

    k = polygon.n
    inv = 1.0 / polygon.lengths
    i = np.arange(k)
    j = (i + 1) % k
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([inv, inv, -inv, -inv])
    return sp.csr_matrix((vals, (rows, cols)), shape=(k, k))
