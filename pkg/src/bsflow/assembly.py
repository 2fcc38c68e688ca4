"""Matrix and vector blocks of the fully discrete two-phase schemes.

Bulk terms use the 7-point triangle rule with elementwise constant
coefficients.  Interface terms that pair bulk P2 functions with lumped
interface quadrature are written as ``E^T W E`` products, where ``E``
evaluates the P2 basis at the interface vertices; this is the same sum
as the element/vertex loop nests, grouped differently.

Interface vertex vector fields are ``(K, 2)`` arrays; flattened they are
component-blocked ``[x-values, y-values]`` like the bulk coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import params as pe
from .fem import QUAD_BARY, QUAD_W, P2Space, interface_normal_matrix, p2_basis
from .interface import InterfacePolygon
from .surface import hat_gradients, laplace_matrix, rho_star, xi_matrices

GD = "gd"
BGN = "bgn"


def block2(a: sp.spmatrix) -> sp.csr_matrix:
    """Two-component block diagonal copy of a scalar operator."""
    return sp.block_diag((a, a), format="csr")


def vec(v: np.ndarray) -> np.ndarray:
    """Component-blocked flattening of an ``(n, 2)`` array."""
    return np.asarray(v).T.ravel()


def unvec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(2, -1).T


@dataclass
class BlockSystem:
    """Blocks of the coupled system over velocity ``u``, pressure ``p``,
    interface displacement ``x`` and curvature ``k``.

    ``blocks[(row, col)]`` are sparse matrices and ``rhs[row]`` vectors;
    missing blocks are zero.
    """

    sizes: dict
    blocks: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)
    scheme: str = GD
    level: int = 0

    def add(self, row: str, col: str, mat) -> None:
        mat = sp.csr_matrix(mat)
        if mat.shape != (self.sizes[row], self.sizes[col]):
            raise ValueError(f"block {(row, col)} has shape {mat.shape}")
        if (row, col) in self.blocks:
            self.blocks[(row, col)] = self.blocks[(row, col)] + mat
        else:
            self.blocks[(row, col)] = mat

    def add_rhs(self, row: str, v) -> None:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.sizes[row],):
            raise ValueError(f"rhs {row} has shape {v.shape}")
        self.rhs[row] = self.rhs.get(row, 0.0) + v

    def order(self):
        return [k for k in ("u", "p", "x", "k") if self.sizes.get(k, 0) > 0]

    def offsets(self):
        off, out = 0, {}
        for k in self.order():
            out[k] = off
            off += self.sizes[k]
        return out, off

    def matrix(self) -> sp.csr_matrix:
        names = self.order()
        grid = [[self.blocks.get((r, c)) for c in names] for r in names]
        for i, r in enumerate(names):
            if grid[i][i] is None:
                grid[i][i] = sp.csr_matrix((self.sizes[r], self.sizes[r]))
        return sp.bmat(grid, format="csr")

    def vector(self) -> np.ndarray:
        return np.concatenate([np.broadcast_to(self.rhs.get(k, 0.0), (self.sizes[k],)) for k in self.order()])


# ---------------------------------------------------------------- bulk terms

_CACHE: dict = {}
_CACHE_MAX = 16


def _cached(key, build):
    if key in _CACHE:
        return _CACHE[key]
    if len(_CACHE) >= _CACHE_MAX:
        _CACHE.pop(next(iter(_CACHE)))
    _CACHE[key] = val = build()
    return val


def _coef_key(name, space, coef):
    coef = np.ascontiguousarray(coef, dtype=float)
    return (name, space.generation, hash(coef.tobytes()))


def _scatter_scalar(space: P2Space, loc: np.ndarray) -> sp.csr_matrix:
    """Assemble ``(nT, 6, 6)`` element matrices, rows = first local index."""
    d = space.dofmap
    rows = np.broadcast_to(d[:, :, None], loc.shape)
    cols = np.broadcast_to(d[:, None, :], loc.shape)
    return sp.csr_matrix((loc.ravel(), (rows.ravel(), cols.ravel())), shape=(space.n_nodes, space.n_nodes))


def mass_matrix(space: P2Space, coef) -> sp.csr_matrix:
    """Scalar P2 mass matrix ``(c phi_a, phi_b)`` for a P0 coefficient."""
    coef = np.broadcast_to(np.asarray(coef, float), (space.mesh.n_triangles,))

    def build():
        phi = p2_basis(QUAD_BARY)  # (q, 6)
        ref = np.einsum("q,qa,qb->ab", QUAD_W, phi, phi)
        return _scatter_scalar(space, (coef * space.mesh.areas)[:, None, None] * ref[None])

    return _cached(_coef_key("mass", space, coef), build)


def viscous_matrix(space: P2Space, mu) -> sp.csr_matrix:
    """``2 (mu D(u), D(v))`` on the vector P2 space."""
    mu = np.broadcast_to(np.asarray(mu, float), (space.mesh.n_triangles,))

    def build():
        g = space.quad_grads  # (nT, q, 6, 2)
        w = (mu * space.mesh.areas)[:, None] * QUAD_W[None, :]
        lap = np.einsum("tq,tqad,tqbd->tab", w, g, g)
        # cross[t, r, s, a, b] = sum_q w d_s phi_a d_r phi_b
        cross = np.einsum("tq,tqas,tqbr->trsab", w, g, g)
        n = space.n_nodes
        d = space.dofmap
        blocks = []
        for r in range(2):
            for s in range(2):
                loc = cross[:, r, s] + (lap if r == s else 0.0)
                rows = np.broadcast_to(d[:, :, None], loc.shape) + r * n
                cols = np.broadcast_to(d[:, None, :], loc.shape) + s * n
                blocks.append((loc.ravel(), rows.ravel(), cols.ravel()))
        vals = np.concatenate([b[0] for b in blocks])
        rows = np.concatenate([b[1] for b in blocks])
        cols = np.concatenate([b[2] for b in blocks])
        return sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))

    return _cached(_coef_key("visc", space, mu), build)


def convection_matrix(space: P2Space, rho, wind: np.ndarray) -> sp.csr_matrix:
    """Antisymmetrized convection ``1/2 (rho, [(w.grad)u].v - [(w.grad)v].u)``.

    Returns the scalar block; rows are test functions.  The element
    matrices are ``K - K^T``, so the result is exactly skew-symmetric.
    """
    rho = np.broadcast_to(np.asarray(rho, float), (space.mesh.n_triangles,))
    phi = p2_basis(QUAD_BARY)  # (q, 6)
    wn = unvec(wind)[space.dofmap]  # (nT, 6, 2)
    wq = np.einsum("qa,tad->tqd", phi, wn)  # wind at quadrature points
    g = space.quad_grads
    adv = np.einsum("tqd,tqad->tqa", wq, g)  # (w.grad) phi_a
    w = (0.5 * rho * space.mesh.areas)[:, None] * QUAD_W[None, :]
    k = np.einsum("tq,tqa,qb->tba", w, adv, phi)  # row b (test), col a (trial)
    return _scatter_scalar(space, k - np.transpose(k, (0, 2, 1)))


@dataclass
class BulkBlocks:
    A: sp.csr_matrix  # velocity-velocity
    B: sp.csr_matrix  # P1 divergence rows
    rhs: np.ndarray


def assemble_bulk_ns(
    space: P2Space,
    rho: np.ndarray,
    mu: np.ndarray,
    U_prev: np.ndarray,
    rho_prev_projected: np.ndarray,
    tau: float,
    f1: Optional[np.ndarray] = None,
    f2: Optional[np.ndarray] = None,
) -> BulkBlocks:
    """Momentum blocks for one step.

    Parameters
    ----------
    U_prev : coefficients of ``I2 U^m`` on the current mesh.
    rho_prev_projected : ``I0 rho^{m-1}`` on the current mesh.
    f1, f2 : coefficients of the interpolated forces at the new time.
    """
    from .fem import divergence_matrix

    rho_avg = 0.5 * (np.asarray(rho) + np.asarray(rho_prev_projected))
    A = block2(mass_matrix(space, rho_avg) / tau) + viscous_matrix(space, mu)
    rhs = block2(mass_matrix(space, rho_prev_projected)) @ U_prev / tau
    if np.any(np.asarray(rho) != 0):
        A = A + block2(convection_matrix(space, rho, U_prev))
        if f1 is not None:
            rhs = rhs + block2(mass_matrix(space, rho)) @ f1
    if f2 is not None:
        rhs = rhs + block2(mass_matrix(space, 1.0)) @ f2
    B = _cached(("div", space.generation), lambda: divergence_matrix(space))
    return BulkBlocks(sp.csr_matrix(A), B, rhs)


# ------------------------------------------------------ interface cross terms


def vertex_evaluation(space: P2Space, points: np.ndarray) -> sp.csr_matrix:
    """``E[k, a] = phi_a(q_k)`` for interface vertices ``q_k``."""
    return space.evaluation_matrix(points)


def rho_cross_mass(polygon: InterfacePolygon, rho_gamma: np.ndarray, E: sp.csr_matrix) -> sp.csr_matrix:
    """Lumped ``<rho_Gamma phi_l, phi_i>^h`` on the vector P2 space."""
    w = polygon.vertex_weights * np.asarray(rho_gamma, float)
    return block2(E.T @ sp.diags(w) @ E)


def rho_cross_mass_prev(
    polygon_prev: InterfacePolygon,
    rho_prev: np.ndarray,
    E_prev: sp.csr_matrix,
    E_cur: sp.csr_matrix,
) -> sp.csr_matrix:
    """Previous-level lumped product with trial functions at ``q^{m-1}`` and
    test functions at ``q^m`` (rows test, columns trial)."""
    w = polygon_prev.vertex_weights * np.asarray(rho_prev, float)
    return block2(E_cur.T @ sp.diags(w) @ E_prev)


def surface_viscosity_vertex_matrix(polygon: InterfacePolygon, psi: np.ndarray, params: pe.PhysicalParams):
    """``2K x 2K`` matrix of ``2<mu D_s, D_s>^h + <lambda div_s, div_s>^h`` on P1 vectors."""
    k = polygon.n
    L = polygon.lengths
    t = polygon.tangents
    psi = np.asarray(psi, float)
    psin = np.roll(psi, -1)
    lam_int = 0.5 * L * (pe.lambda_gamma_of(params, psi) + pe.lambda_gamma_of(params, psin))
    mu_int = 0.5 * L * (pe.mu_gamma_of(params, psi) + pe.mu_gamma_of(params, psin))
    S = hat_gradients(polygon)  # (K, end, 2)
    St = np.einsum("jed,jd->je", S, t)  # tangential derivatives of the hats
    # K_ij[r, s] = <lambda,1> S_i[r] S_j[s] + 2 <mu,1> (d_t chi_i)(d_t chi_j) t_r t_s
    Kl = lam_int[:, None, None, None, None] * S[:, :, None, :, None] * S[:, None, :, None, :]
    Km = 2 * mu_int[:, None, None, None, None] * (
        St[:, :, None, None, None] * St[:, None, :, None, None] * t[:, None, None, :, None] * t[:, None, None, None, :]
    )
    Kloc = Kl + Km  # (seg, i, j, r, s)
    vert = np.stack([np.arange(k), (np.arange(k) + 1) % k], axis=1)
    rows = vert[:, :, None, None, None] + k * np.arange(2)[None, None, None, :, None]
    cols = vert[:, None, :, None, None] + k * np.arange(2)[None, None, None, None, :]
    rows = np.broadcast_to(rows, Kloc.shape)
    cols = np.broadcast_to(cols, Kloc.shape)
    return sp.csr_matrix((Kloc.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * k, 2 * k))


def assemble_surface_viscosity(
    polygon: InterfacePolygon, psi: np.ndarray, params: pe.PhysicalParams, E: sp.csr_matrix
) -> sp.csr_matrix:
    """Surface viscous block on the velocity DOFs."""
    if params.mu_gamma_bar == 0 and params.lambda_gamma_bar == 0:
        n = 2 * E.shape[1]
        return sp.csr_matrix((n, n))
    Eb = block2(E)
    return sp.csr_matrix(Eb.T @ surface_viscosity_vertex_matrix(polygon, psi, params) @ Eb)


def xi_cross_vertex_weights(
    polygon_prev: InterfacePolygon, rho_star_prev: np.ndarray, U_at_prev: np.ndarray, transport: np.ndarray
) -> np.ndarray:
    """Coefficients ``c[k, r]`` multiplying ``xi_r(q^{m-1}_k)`` in

    ``sum_r <rho_* transport, Xi(pi U_r) grad_s(pi xi_r)>^h``.
    """
    k = polygon_prev.n
    c = 0.5 * polygon_prev.lengths * np.asarray(rho_star_prev, float)
    vsum = transport + np.roll(transport, -1, axis=0)  # (seg, 2) sum of endpoint values
    G = hat_gradients(polygon_prev)  # (seg, end, 2)
    out = np.zeros((k, 2))
    for r in range(2):
        Lam = xi_matrices(polygon_prev, U_at_prev[:, r])  # (seg, 2, 2)
        val = c[:, None] * np.einsum("jd,jde,jne->jn", vsum, Lam, G)  # (seg, end)
        np.add.at(out[:, r], np.arange(k), val[:, 0])
        np.add.at(out[:, r], (np.arange(k) + 1) % k, val[:, 1])
    return out


def assemble_xi_cross(
    polygon_prev: InterfacePolygon,
    rho_star_prev: np.ndarray,
    U_at_prev: np.ndarray,
    X_new_minus_id: np.ndarray,
    tau: float,
    E_prev: sp.csr_matrix,
) -> np.ndarray:
    """Right-hand side ``-sum_r <rho_*((X^m - id)/tau - I2U^m), Xi(..) grad_s(pi xi_r)>^h``.

    ``U_at_prev`` holds ``I2 U^m`` at the previous vertices and
    ``X_new_minus_id`` the vertex displacements ``q^m - q^{m-1}``.
    """
    transport = X_new_minus_id / tau - U_at_prev
    c = xi_cross_vertex_weights(polygon_prev, rho_star_prev, U_at_prev, transport)
    return -vec(E_prev.T @ c)


def marangoni_vertex_vector(polygon: InterfacePolygon, g: np.ndarray) -> np.ndarray:
    """Vertex coefficients of ``<grad_s pi g, xi>^h``, shape ``(K, 2)``."""
    dg = np.roll(g, -1) - g
    half = 0.5 * dg[:, None] * polygon.tangents
    return half + np.roll(half, 1, axis=0)


def normal_weight_matrix(polygon: InterfacePolygon) -> sp.csr_matrix:
    """``W[k, (r, k)] = m_k omega_k[r]``, i.e. ``<v, chi_k nu>^h`` for P1 vectors ``v``."""
    k = polygon.n
    mw = polygon.vertex_weights[:, None] * polygon.vertex_normals
    rows = np.concatenate([np.arange(k), np.arange(k)])
    cols = np.concatenate([np.arange(k), k + np.arange(k)])
    return sp.csr_matrix((vec(mw), (rows, cols)), shape=(k, 2 * k))


@dataclass
class CurvatureBlocks:
    """Blocks of the interface kinematics and curvature equations."""

    uk: sp.csr_matrix  # velocity rows, curvature columns
    ku: sp.csr_matrix  # kinematic rows, velocity columns
    kx: sp.csr_matrix  # kinematic rows, displacement columns
    xk: sp.csr_matrix  # curvature-definition rows, curvature columns
    xx: sp.csr_matrix  # curvature-definition rows, displacement columns
    rhs_u: np.ndarray
    rhs_x: np.ndarray


def assemble_curvature_coupling(
    polygon: InterfacePolygon,
    psi: np.ndarray,
    kappa_prev: np.ndarray,
    params: pe.PhysicalParams,
    scheme: str,
    tau: float,
    E: sp.csr_matrix,
    space: Optional[P2Space] = None,
    N: Optional[sp.csr_matrix] = None,
) -> CurvatureBlocks:
    """Curvature, kinematic and Marangoni terms for either scheme.

    GD uses a vector curvature and lumped products throughout.  BGN uses
    a scalar curvature; its ``kappa nu`` momentum coupling and the
    kinematic right side use the exact product ``N`` while the Marangoni
    term and the left side of the kinematic equation are lumped.
    """
    eos = params.eos
    g0 = eos.gamma_bar
    k = polygon.n
    m = polygon.vertex_weights
    A = block2(laplace_matrix(polygon))
    Eb = block2(E)
    ids = vec(polygon.points)
    if scheme == GD:
        Mb = sp.diags(np.concatenate([m, m]))
        gam = pe.gamma(eos, psi)
        explicit = m[:, None] * (gam - g0)[:, None] * kappa_prev + marangoni_vertex_vector(polygon, gam)
        return CurvatureBlocks(
            uk=sp.csr_matrix(-g0 * (Eb.T @ Mb)),
            ku=sp.csr_matrix(Mb @ Eb),
            kx=sp.csr_matrix(-Mb / tau),
            xk=sp.csr_matrix(Mb),
            xx=A,
            rhs_u=Eb.T @ vec(explicit),
            rhs_x=-(A @ ids),
        )
    if scheme != BGN:
        raise ValueError(f"unknown scheme {scheme!r}")
    if N is None:
        N = interface_normal_matrix(space, polygon)
    W = normal_weight_matrix(polygon)
    geps = pe.gamma_eps(eos, params.epsilon_reg, psi)
    rhs_u = N @ ((geps - g0) * kappa_prev) + Eb.T @ vec(marangoni_vertex_vector(polygon, geps))
    return CurvatureBlocks(
        uk=sp.csr_matrix(-g0 * N),
        ku=sp.csr_matrix(N.T),
        kx=sp.csr_matrix(-W / tau),
        xk=sp.csr_matrix(W.T),
        xx=A,
        rhs_u=rhs_u,
        rhs_x=-(A @ ids),
    )


# ----------------------------------------------------------- interface fields


def transport_rhs(polygon: InterfacePolygon, edge_value: np.ndarray, transport: np.ndarray) -> np.ndarray:
    """``<edge_value transport . grad_s chi_k>^h`` for every vertex ``k``.

    ``edge_value`` is piecewise constant per segment, ``transport`` a
    vertex vector field.
    """
    k = polygon.n
    c = 0.5 * polygon.lengths * edge_value
    vsum = transport + np.roll(transport, -1, axis=0)
    G = hat_gradients(polygon)
    val = c[:, None] * np.einsum("jd,jnd->jn", vsum, G)
    out = np.zeros(k)
    np.add.at(out, np.arange(k), val[:, 0])
    np.add.at(out, (np.arange(k) + 1) % k, val[:, 1])
    return out


def diffusion_rhs(polygon: InterfacePolygon, field_values: np.ndarray, transport: np.ndarray, coeff: float) -> np.ndarray:
    """``coeff <|P transport| grad_s field, grad_s chi_k>^h`` for every vertex."""
    k = polygon.n
    t = polygon.tangents
    speed = np.abs(np.einsum("jd,jd->j", transport, t)) + np.abs(np.einsum("jd,jd->j", np.roll(transport, -1, axis=0), t))
    df = (np.roll(field_values, -1) - field_values) / polygon.lengths
    # grad_s chi . grad_s f = -df / L for the start vertex and +df / L for the end vertex
    val = coeff * 0.5 * polygon.lengths * speed * df / polygon.lengths
    out = np.zeros(k)
    np.add.at(out, np.arange(k), -val)
    np.add.at(out, (np.arange(k) + 1) % k, val)
    return out


@dataclass
class FieldSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray


def assemble_interface_fields(
    polygon_old: InterfacePolygon,
    polygon_new: InterfacePolygon,
    tau: float,
    transport: np.ndarray,
    rho_gamma: np.ndarray,
    psi: np.ndarray,
    params: pe.PhysicalParams,
    scheme: str,
    numerical_diffusion: bool = False,
):
    """SPD systems for ``rho_Gamma^{m+1}`` and ``Psi^{m+1}`` (both scaled by ``tau``).

    ``transport`` is ``(X^{m+1} - id)/tau - U^{m+1}`` at the old vertices;
    it only enters the BGN scheme.
    """
    m_old = polygon_old.vertex_weights
    m_new = polygon_new.vertex_weights
    rhs_rho = m_old * rho_gamma
    rhs_psi = m_old * psi
    if scheme == BGN:
        rhs_rho = rhs_rho - tau * transport_rhs(polygon_old, rho_star(polygon_old, rho_gamma), transport)
        eos = params.eos
        pstar = pe.psi_star_eps(eos, params.epsilon_reg, psi, np.roll(psi, -1))
        rhs_psi = rhs_psi - tau * transport_rhs(polygon_old, pstar, transport)
        if numerical_diffusion and params.theta_coeff > 0:
            rhs_rho = rhs_rho - tau * diffusion_rhs(polygon_old, rho_gamma, transport, params.theta(polygon_old.h))
    A_psi = sp.diags(m_new) + tau * params.d_gamma * laplace_matrix(polygon_new)
    return FieldSystem(sp.diags(m_new, format="csr"), rhs_rho), FieldSystem(sp.csr_matrix(A_psi), rhs_psi)
