"""One fully discrete time step of either scheme, plus state bookkeeping.

Level ``m`` state holds the bulk mesh ``T^m`` fitted to ``Gamma^m``, the
velocity ``U^m`` on the mesh it was computed on (``T^{m-1}``), and the
previous-level data the schemes need: ``Gamma^{m-1}``, ``U^{m-1}``,
``rho_Gamma^{m-1}`` and the bulk density ``rho^{m-1}`` on ``T^{m-1}``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import params as pe
from .assembly import (
    BGN,
    GD,
    BlockSystem,
    assemble_bulk_ns,
    assemble_curvature_coupling,
    assemble_interface_fields,
    assemble_surface_viscosity,
    assemble_xi_cross,
    block2,
    diffusion_rhs,
    mass_matrix,
    rho_cross_mass,
    rho_cross_mass_prev,
    unvec,
    vec,
    vertex_evaluation,
    viscous_matrix,
)
from .fem import FEFunction, P2Space, interpolate_I2, p1_integrals, transfer, xfem_volume_column
from .interface import InterfacePolygon, check_assumptions, enclosed_area, mesh_quality
from .mesh import (
    BulkMesh,
    Domain,
    ElementClassification,
    adapt_mesh,
    build_uniform_mesh,
    classify_elements,
    piecewise_coefficients,
    project_p0,
)
from .solver import DEFAULT_TOL, solve_saddle_point, solve_spd
from .surface import rho_star

Field = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class StepSettings:
    """Discretization and model choices shared by every step of a run.

    ``boundary`` is the Dirichlet datum ``g(points, t)``; ``None`` means
    homogeneous.  Free-slip sides always prescribe ``u.n = 0``.
    """

    domain: Domain
    params: pe.PhysicalParams
    scheme: str = BGN
    tau: float = 1e-3
    n_fine: int = 16
    n_coarse: int = 16
    xfem: bool = True
    numerical_diffusion: bool = False
    boundary: Optional[Field] = None
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.scheme not in (GD, BGN):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not self.n_fine >= self.n_coarse >= 1:
            raise ValueError("need n_fine >= n_coarse >= 1")


@dataclass
class StepInfo:
    """Energy bookkeeping of the last step (terms of the stability estimate)."""

    residual: float
    energy_old: float
    energy_new: float
    dissipation: float
    work: float
    boundary_flux: float


@dataclass
class SimulationState:
    settings: StepSettings
    m: int
    t: float
    mesh: BulkMesh
    space: P2Space
    classification: ElementClassification
    rho: np.ndarray
    mu: np.ndarray
    polygon: InterfacePolygon
    U: FEFunction
    P: np.ndarray
    rho_gamma: np.ndarray
    psi: np.ndarray
    kappa: np.ndarray
    polygon_prev: InterfacePolygon
    U_prev: FEFunction
    rho_gamma_prev: np.ndarray
    rho_prev: np.ndarray
    rho_prev_mesh: BulkMesh
    transport_prev: Optional[np.ndarray] = None
    info: Optional[StepInfo] = None

    @property
    def scheme(self) -> str:
        return self.settings.scheme

    @property
    def tau(self) -> float:
        return self.settings.tau


# ----------------------------------------------------------------- set-up


def fit_mesh(settings: StepSettings, points: np.ndarray, current: Optional[BulkMesh] = None) -> BulkMesh:
    """Bulk mesh for an interface; uniform meshes and unchanged adaptations are reused."""
    if settings.n_fine == settings.n_coarse:
        if current is not None:
            return current
        return build_uniform_mesh(settings.domain, settings.n_coarse)
    base = current if current is not None else build_uniform_mesh(settings.domain, settings.n_coarse)
    new = adapt_mesh(base, points, settings.n_fine, settings.n_coarse)
    if current is not None and new.same_as(current):
        return current
    return new


def _nodal(value, k: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, float), (k,)).copy()


def initial_kappa(settings: StepSettings, polygon: InterfacePolygon, radius: Optional[float] = None) -> np.ndarray:
    """GD: solve the lumped curvature-vector equation; BGN: ``-1/R0``."""
    if settings.scheme == BGN:
        if radius is None:
            radius = np.sqrt(enclosed_area(polygon) / np.pi)
        return np.full(polygon.n, -1.0 / radius)
    from .surface import laplace_matrix

    m = polygon.vertex_weights
    rhs = -(laplace_matrix(polygon) @ polygon.points)
    return rhs / m[:, None]


def initial_state(
    settings: StepSettings,
    polygon: InterfacePolygon,
    u0: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    rho_gamma0=1.0,
    psi0=1.0,
    kappa0: Optional[np.ndarray] = None,
    t0: float = 0.0,
) -> SimulationState:
    """Level-0 state; previous-level data are copies of the initial data."""
    check_assumptions(polygon, settings.domain)
    mesh = fit_mesh(settings, polygon.points)
    space = P2Space(mesh)
    cls = classify_elements(mesh, polygon.points)
    rho, mu = piecewise_coefficients(cls, settings.params)
    if u0 is None:
        U = FEFunction(space, np.zeros(space.n_dofs))
    else:
        U = interpolate_I2(space, u0)
    k = polygon.n
    if callable(psi0):
        psi0 = psi0(polygon.points)
    if callable(rho_gamma0):
        rho_gamma0 = rho_gamma0(polygon.points)
    rg = _nodal(rho_gamma0, k)
    kappa = initial_kappa(settings, polygon) if kappa0 is None else np.array(kappa0, float)
    nP = mesh.n_vertices + (1 if settings.xfem else 0)
    return SimulationState(
        settings=settings,
        m=0,
        t=t0,
        mesh=mesh,
        space=space,
        classification=cls,
        rho=rho,
        mu=mu,
        polygon=polygon,
        U=U,
        P=np.zeros(nP),
        rho_gamma=rg,
        psi=_nodal(psi0, k),
        kappa=kappa,
        polygon_prev=polygon,
        U_prev=U,
        rho_gamma_prev=rg.copy(),
        rho_prev=rho.copy(),
        rho_prev_mesh=mesh,
    )


# --------------------------------------------------------- boundary data


def boundary_edge_normals(mesh: BulkMesh):
    """Boundary edge ids and their outward unit normals."""
    ids = mesh.boundary[0]
    owner = np.full(len(mesh.edges), -1)
    owner[mesh.tri_edges.ravel()] = np.repeat(np.arange(mesh.n_triangles), 3)
    tri = mesh.triangles[owner[ids]]
    e = mesh.edges[ids]
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    d = b - a
    n = np.column_stack([d[:, 1], -d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]
    third = mesh.vertices[tri].sum(axis=1) - a - b
    flip = np.einsum("nd,nd->n", third - a, n) > 0
    n[flip] *= -1
    return ids, n


def boundary_flux(space: P2Space, coeffs: np.ndarray, per_edge: bool = False):
    """``int_{dOmega} U.n`` of a P2 field, exact by Simpson's rule on each edge."""
    mesh = space.mesh
    ids, n = boundary_edge_normals(mesh)
    u = unvec(coeffs)
    e = mesh.edges[ids]
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    L = np.hypot(*(b - a).T)
    un = lambda node: np.einsum("nd,nd->n", u[node], n)
    flux = L / 6.0 * (un(e[:, 0]) + 4.0 * un(mesh.n_vertices + ids) + un(e[:, 1]))
    return flux if per_edge else float(flux.sum())


def apply_dirichlet(space: P2Space, g: Optional[Field], t: float):
    """Fixed velocity DOFs, their values ``I2 g`` (normal part 0 on slip sides)
    and the boundary flux of the prescribed trace."""
    fixed = space.fixed_dofs()
    full = np.zeros(space.n_dofs)
    if g is not None:
        dn = space.constraints[0]
        vals = np.asarray(g(space.nodes[dn], t), float)
        full[dn] = vals[:, 0]
        full[dn + space.n_nodes] = vals[:, 1]
    return fixed, full[fixed], boundary_flux(space, full)


def _force(space: P2Space, f: Optional[Field], t: float) -> Optional[np.ndarray]:
    if f is None:
        return None
    return interpolate_I2(space, lambda x: f(x, t)).coeffs


# ------------------------------------------------------------------ step


def assemble_step(state: SimulationState):
    """Assemble the coupled system of one step.

    Returns ``(system, aux)`` where ``aux`` carries the pieces the solve
    and the energy bookkeeping need.
    """
    s = state.settings
    prm = s.params
    tau = s.tau
    space, mesh = state.space, state.mesh
    poly, poly_prev = state.polygon, state.polygon_prev
    t_new = state.t + tau
    U_t = transfer(state.U, space).coeffs
    U_pt = transfer(state.U_prev, space).coeffs
    rho_t = project_p0(state.rho_prev_mesh, state.rho_prev, mesh)
    f1 = _force(space, prm.gravity_force, t_new)
    f2 = _force(space, prm.extra_force, t_new)
    bulk = assemble_bulk_ns(space, state.rho, state.mu, U_t, rho_t, tau, f1, f2)

    E = vertex_evaluation(space, poly.points)
    E_prev = vertex_evaluation(space, poly_prev.points)
    Ks = assemble_surface_viscosity(poly, state.psi, prm, E)
    Auu = bulk.A + Ks
    rhs_u = bulk.rhs.copy()
    rg, rgp = state.rho_gamma, state.rho_gamma_prev
    if s.scheme == GD:
        Auu = Auu + rho_cross_mass(poly, rg, E) / tau
        rhs_u += rho_cross_mass_prev(poly_prev, rgp, E_prev, E) @ U_t / tau
    else:
        pos, neg = np.maximum(rg, 0.0), np.minimum(rg, 0.0)
        Auu = Auu + rho_cross_mass(poly, pos, E) / tau
        rhs_u -= rho_cross_mass(poly, neg, E) @ U_t / tau
        rhs_u += rho_cross_mass_prev(poly_prev, np.maximum(rgp, 0.0), E_prev, E) @ U_t / tau
        rhs_u += rho_cross_mass_prev(poly_prev, np.minimum(rgp, 0.0), E_prev, E) @ U_pt / tau
        U_at_prev = unvec(block2(E_prev) @ U_t)
        rhs_u += assemble_xi_cross(
            poly_prev, rho_star(poly_prev, rgp), U_at_prev, poly.points - poly_prev.points, tau, E_prev
        )
        if s.numerical_diffusion and prm.theta_coeff > 0 and state.transport_prev is not None:
            r = diffusion_rhs(poly, rg, state.transport_prev, prm.theta(poly.h))
            U_at = unvec(block2(E) @ U_t)
            rhs_u -= 0.5 * (block2(E).T @ vec(r[:, None] * U_at))

    cb = assemble_curvature_coupling(poly, state.psi, state.kappa, prm, s.scheme, tau, E, space)
    fixed, fixed_vals, flux = apply_dirichlet(space, s.boundary, t_new)

    nV = mesh.n_vertices
    B = bulk.B
    w = p1_integrals(mesh)
    area_minus = 0.0
    if s.xfem:
        col, area_minus = xfem_volume_column(space, poly.points, state.classification)
        B = sp.vstack([B, sp.csr_matrix(col[None, :])], format="csr")
        w = np.concatenate([w, [area_minus]])
    k = poly.n
    nk = 2 * k if s.scheme == GD else k
    sysm = BlockSystem({"u": space.n_dofs, "p": B.shape[0], "x": 2 * k, "k": nk}, scheme=s.scheme, level=state.m)
    sysm.add("u", "u", Auu)
    sysm.add("u", "p", -B.T)
    sysm.add("p", "u", -B)
    sysm.add("u", "k", cb.uk)
    sysm.add("k", "u", cb.ku)
    sysm.add("k", "x", cb.kx)
    sysm.add("x", "k", cb.xk)
    sysm.add("x", "x", cb.xx)
    sysm.add_rhs("u", rhs_u + cb.rhs_u)
    sysm.add_rhs("p", -w * flux / s.domain.area)
    sysm.add_rhs("x", cb.rhs_x)
    aux = dict(
        U_t=U_t, rho_t=rho_t, E=E, Ks=Ks, f1=f1, f2=f2, fixed=fixed, fixed_vals=fixed_vals,
        flux=flux, weights=w, nV=nV, area_minus=area_minus,
    )
    return sysm, aux


def _energy_terms(state: SimulationState, aux, U_new: np.ndarray, poly_new: InterfacePolygon) -> StepInfo:
    s = state.settings
    prm = s.params
    space = state.space
    g0 = prm.eos.gamma_bar
    Mt = block2(mass_matrix(space, aux["rho_t"]))
    Mn = block2(mass_matrix(space, state.rho))
    U_t = aux["U_t"]
    dU = U_new - U_t
    e_old = 0.5 * U_t @ (Mt @ U_t) + g0 * state.polygon.perimeter
    e_new = 0.5 * U_new @ (Mn @ U_new) + g0 * poly_new.perimeter
    diss = 0.5 * dU @ (Mt @ dU) + s.tau * U_new @ (viscous_matrix(space, state.mu) @ U_new)
    diss += s.tau * U_new @ (aux["Ks"] @ U_new)
    work = 0.0
    if aux["f1"] is not None:
        work += s.tau * U_new @ (Mn @ aux["f1"])
    if aux["f2"] is not None:
        work += s.tau * U_new @ (block2(mass_matrix(space, 1.0)) @ aux["f2"])
    return StepInfo(0.0, float(e_old), float(e_new), float(diss), float(work), float(aux["flux"]))


def step(state: SimulationState) -> SimulationState:
    """Advance one time level: coupled solve, interface update, surface fields, re-mesh.

    Raises
    ------
    GeometricError
        The new interface is degenerate, self-intersecting, leaves the
        domain, or its vertex normals no longer span the plane.
    SolverError
        Factorization failure or residual above tolerance.
    """
    s = state.settings
    prm = s.params
    tau = s.tau
    sysm, aux = assemble_step(state)
    sol = solve_saddle_point(
        sysm, aux["fixed"], aux["fixed_vals"], pressure_weights=aux["weights"], n_p1=aux["nV"], tol=s.tol
    )
    poly = state.polygon
    dX = unvec(sol.x)
    poly_new = InterfacePolygon(poly.points + dX)
    check_assumptions(poly_new, s.domain)
    kappa_new = unvec(sol.k) if s.scheme == GD else sol.k

    transport = dX / tau - unvec(block2(aux["E"]) @ sol.u)
    rho_sys, psi_sys = assemble_interface_fields(
        poly, poly_new, tau, transport, state.rho_gamma, state.psi, prm, s.scheme, s.numerical_diffusion
    )
    rg_new = solve_spd(rho_sys.matrix, rho_sys.rhs, tol=s.tol)
    psi_new = solve_spd(psi_sys.matrix, psi_sys.rhs, tol=s.tol)

    info = _energy_terms(state, aux, sol.u, poly_new)
    info.residual = sol.residual

    mesh_new = fit_mesh(s, poly_new.points, state.mesh)
    space_new = state.space if mesh_new is state.mesh else P2Space(mesh_new)
    cls_new = classify_elements(mesh_new, poly_new.points)
    rho_new, mu_new = piecewise_coefficients(cls_new, prm)
    return SimulationState(
        settings=s,
        m=state.m + 1,
        t=state.t + tau,
        mesh=mesh_new,
        space=space_new,
        classification=cls_new,
        rho=rho_new,
        mu=mu_new,
        polygon=poly_new,
        U=FEFunction(state.space, sol.u),
        P=sol.p,
        rho_gamma=rg_new,
        psi=psi_new,
        kappa=kappa_new,
        polygon_prev=poly,
        U_prev=state.U,
        rho_gamma_prev=state.rho_gamma,
        rho_prev=state.rho,
        rho_prev_mesh=state.mesh,
        transport_prev=transport,
        info=info,
    )


# ----------------------------------------------------------- diagnostics


@dataclass
class DiagnosticsRecord:
    t: float
    kinetic: float
    surface_kinetic: float
    interface_energy: float
    total_surfactant: float
    total_surface_mass: float
    area: float
    psi_min: float
    psi_max: float
    rho_gamma_min: float
    rho_gamma_max: float
    edge_ratio: float
    dissipation: float

    def row(self) -> dict:
        return dict(self.__dict__)


def diagnostics(state: SimulationState) -> DiagnosticsRecord:
    """Energies, conserved totals and interface quality at the current level."""
    prm = state.settings.params
    poly = state.polygon
    U = state.U
    rho_u = state.rho_prev if state.m > 0 else state.rho  # density on the mesh of U
    kin = 0.5 * U.coeffs @ (block2(mass_matrix(U.space, rho_u)) @ U.coeffs)
    Uq = U(poly.points)
    m = poly.vertex_weights
    skin = 0.5 * float(np.sum(m * state.rho_gamma * np.einsum("kd,kd->k", Uq, Uq)))
    if prm.eos.is_constant:
        e_if = prm.eos.gamma_bar * poly.perimeter
    else:
        e_if = float(np.sum(m * pe.f_eps(prm.eos, prm.epsilon_reg, state.psi)))
    ratio, _ = mesh_quality(poly)
    return DiagnosticsRecord(
        t=float(state.t),
        kinetic=float(kin),
        surface_kinetic=skin,
        interface_energy=float(e_if),
        total_surfactant=float(np.sum(m * state.psi)),
        total_surface_mass=float(np.sum(m * state.rho_gamma)),
        area=enclosed_area(poly),
        psi_min=float(state.psi.min()),
        psi_max=float(state.psi.max()),
        rho_gamma_min=float(state.rho_gamma.min()),
        rho_gamma_max=float(state.rho_gamma.max()),
        edge_ratio=ratio,
        dissipation=0.0 if state.info is None else state.info.dissipation,
    )


# ------------------------------------------------------------ checkpoints

CHECKPOINT_MAGIC = b"BSFLOWCK"
CHECKPOINT_VERSION = 1


def _mesh_arrays(prefix: str, mesh: BulkMesh) -> dict:
    return {f"{prefix}.vertices": mesh.vertices, f"{prefix}.triangles": mesh.triangles}


def save_checkpoint(state: SimulationState, path) -> None:
    """Binary checkpoint.

    Layout: 8-byte magic ``BSFLOWCK``; little-endian ``uint32`` version and
    ``uint32`` header length; a UTF-8 JSON header with the scalars, mesh
    generation counters and, for every array, its name, dtype and shape;
    then the raw arrays in header order, ``<f8`` for real data and ``<i8``
    for connectivity.
    """
    meshes = {"mesh": state.mesh, "umesh": state.U.space.mesh, "uprevmesh": state.U_prev.space.mesh, "rhomesh": state.rho_prev_mesh}
    arrays = {}
    for k, mm in meshes.items():
        arrays.update(_mesh_arrays(k, mm))
    arrays.update(
        {
            "polygon": state.polygon.points,
            "polygon_prev": state.polygon_prev.points,
            "U": state.U.coeffs,
            "U_prev": state.U_prev.coeffs,
            "P": state.P,
            "rho_gamma": state.rho_gamma,
            "psi": state.psi,
            "kappa": np.asarray(state.kappa),
            "rho_gamma_prev": state.rho_gamma_prev,
            "rho_prev": state.rho_prev,
        }
    )
    if state.transport_prev is not None:
        arrays["transport_prev"] = state.transport_prev
    entries = []
    blobs = []
    for name, a in arrays.items():
        a = np.asarray(a)
        dt = "<i8" if np.issubdtype(a.dtype, np.integer) else "<f8"
        entries.append({"name": name, "dtype": dt, "shape": list(a.shape)})
        blobs.append(np.ascontiguousarray(a, dtype=dt).tobytes())
    d = state.settings.domain
    header = {
        "m": state.m,
        "t": state.t,
        "scheme": state.settings.scheme,
        "generations": {k: mm.generation for k, mm in meshes.items()},
        "domain": {"box": list(d.box), "hole": None if d.hole is None else list(d.hole), "free_slip": list(d.free_slip)},
        "arrays": entries,
    }
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(hb)))
        fh.write(hb)
        for b in blobs:
            fh.write(b)


def read_checkpoint(path):
    """Return ``(header, arrays)`` of a checkpoint file."""
    with open(path, "rb") as fh:
        if fh.read(8) != CHECKPOINT_MAGIC:
            raise ValueError("not a checkpoint file")
        version, n = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(n).decode())
        arrays = {}
        for e in header["arrays"]:
            count = int(np.prod(e["shape"])) if e["shape"] else 1
            arrays[e["name"]] = np.frombuffer(fh.read(8 * count), dtype=e["dtype"]).reshape(e["shape"]).copy()
    return header, arrays


def load_checkpoint(path, settings: StepSettings) -> SimulationState:
    """Rebuild a state saved by :func:`save_checkpoint` under the given settings."""
    header, a = read_checkpoint(path)
    if header["scheme"] != settings.scheme:
        raise ValueError("checkpoint scheme differs from the settings")
    meshes, spaces = {}, {}
    for k in ("mesh", "umesh", "uprevmesh", "rhomesh"):
        key = (a[f"{k}.vertices"].tobytes(), a[f"{k}.triangles"].tobytes())
        if key not in meshes:
            meshes[key] = BulkMesh(a[f"{k}.vertices"], a[f"{k}.triangles"], settings.domain)
        meshes[k] = meshes[key]
    for k in ("mesh", "umesh", "uprevmesh"):
        mm = meshes[k]
        spaces.setdefault(id(mm), P2Space(mm))
    mesh = meshes["mesh"]
    poly = InterfacePolygon(a["polygon"])
    cls = classify_elements(mesh, poly.points)
    rho, mu = piecewise_coefficients(cls, settings.params)
    return SimulationState(
        settings=settings,
        m=int(header["m"]),
        t=float(header["t"]),
        mesh=mesh,
        space=spaces[id(mesh)],
        classification=cls,
        rho=rho,
        mu=mu,
        polygon=poly,
        U=FEFunction(spaces[id(meshes["umesh"])], a["U"]),
        P=a["P"],
        rho_gamma=a["rho_gamma"],
        psi=a["psi"],
        kappa=a["kappa"],
        polygon_prev=InterfacePolygon(a["polygon_prev"]),
        U_prev=FEFunction(spaces[id(meshes["uprevmesh"])], a["U_prev"]),
        rho_gamma_prev=a["rho_gamma_prev"],
        rho_prev=a["rho_prev"],
        rho_prev_mesh=meshes["rhomesh"],
        transport_prev=a.get("transport_prev"),
    )
