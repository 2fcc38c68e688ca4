"""Experiment configuration, presets, batch runs and the convergence study.

Configurations are flat JSON objects with a ``schema_version``; physical
symbols keep their conventional names (``rho_plus``, ``mu_gamma_bar``,
...).  A run writes

* ``diagnostics.csv``: one row per time level,
* ``interface_t*.csv`` / ``.vtk``: interface snapshots at the cadence,
* ``summary.json``: status, conservation drifts, mesh quality and, for the
  expanding bubble, the four error norms,
* ``interface.svg`` and ``energy.svg``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import params as pe
from .assembly import BGN, GD
from .exact import ExpandingBubble, HistoryEntry, error_norms
from .interface import (
    InterfacePolygon,
    enclosed_area,
    make_circle,
    make_ellipse,
    taylor_deformation,
    write_polyline_csv,
    write_polyline_vtk,
)
from .mesh import Domain, GeometricError
from .solver import SolverError
from .stepper import StepSettings, diagnostics, initial_state, save_checkpoint, step

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_GEOMETRY = 2
EXIT_SOLVER = 3


@dataclass
class ExperimentConfig:
    """Every knob of a run; see :func:`preset` for worked examples.

    ``psi0`` is ``"constant"`` (value ``psi0_value``) or ``"shear"``
    (``1e-6 + [z_1]_+``); ``u0`` is ``"zero"`` or ``"boundary"``;
    ``boundary`` is ``"none"``, ``"shear"`` (``g = (z_2/2, 0)``) or
    ``"expanding"`` (``g = alpha z/|z|^2``, which also enables the exact
    error norms).  ``output_every`` is the snapshot cadence in steps
    (0: first and last level only).
    """

    schema_version: int = SCHEMA_VERSION
    preset: str = "custom"
    scheme: str = BGN
    n_fine: int = 16
    n_coarse: int = 16
    k_gamma: int = 32
    tau: float = 1e-2
    t_max: float = 1.0
    xfem: bool = True
    numdiff: bool = False
    domain_box: list = field(default_factory=lambda: [-1.0, 1.0, -1.0, 1.0])
    domain_hole: Optional[list] = None
    free_slip: list = field(default_factory=list)
    rho_plus: float = 1.0
    rho_minus: float = 1.0
    mu_plus: float = 1.0
    mu_minus: float = 1.0
    eos: str = pe.CONSTANT
    gamma_bar: float = 1.0
    beta: float = 0.0
    psi_infinity: Optional[float] = None
    d_gamma: float = 0.0
    mu_gamma_bar: float = 0.0
    lambda_gamma_bar: float = 0.0
    b_mu: float = 0.0
    b_lambda: float = 0.0
    epsilon_reg: float = 1e-8
    theta_coeff: float = 0.0
    gravity: list = field(default_factory=lambda: [0.0, 0.0])
    shape: str = "circle"
    center: list = field(default_factory=lambda: [0.0, 0.0])
    radius: float = 0.5
    semi_axes: list = field(default_factory=lambda: [0.5, 0.5])
    psi0: str = "constant"
    psi0_value: float = 1.0
    rho_gamma0: float = 1.0
    u0: str = "zero"
    boundary: str = "none"
    alpha: float = 0.15
    output_every: int = 0
    plot_times: list = field(default_factory=list)
    compare_schemes: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        if self.scheme not in (GD, BGN):
            raise ValueError(f"scheme must be 'gd' or 'bgn', got {self.scheme!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.t_max >= self.tau:
            raise ValueError("t_max must be at least tau")
        if not self.n_fine >= self.n_coarse >= 1:
            raise ValueError("need n_fine >= n_coarse >= 1")
        if self.k_gamma < 3:
            raise ValueError("k_gamma must be at least 3")
        for name, allowed in (
            ("shape", ("circle", "ellipse")),
            ("psi0", ("constant", "shear")),
            ("u0", ("zero", "boundary")),
            ("boundary", ("none", "shear", "expanding")),
        ):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "preset" in data and data["preset"] in PRESETS and set(data) <= {"preset", "schema_version"}:
            return preset(data["preset"])
        return cls(**data).validate()

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    # -- derived objects

    def domain(self) -> Domain:
        hole = None if self.domain_hole is None else tuple(self.domain_hole)
        return Domain(tuple(self.domain_box), hole, tuple(self.free_slip))

    def physical(self) -> pe.PhysicalParams:
        psi_inf = math.inf if self.psi_infinity is None else self.psi_infinity
        eos = pe.EquationOfState(self.eos, self.gamma_bar, self.beta, psi_inf)
        grav = np.asarray(self.gravity, float)
        f1 = None if not np.any(grav) else (lambda x, t, g=grav: np.broadcast_to(g, x.shape).copy())
        if self.boundary == "expanding":
            f1 = self.exact().force
        return pe.PhysicalParams(
            rho_plus=self.rho_plus,
            rho_minus=self.rho_minus,
            mu_plus=self.mu_plus,
            mu_minus=self.mu_minus,
            eos=eos,
            d_gamma=self.d_gamma,
            mu_gamma_bar=self.mu_gamma_bar,
            lambda_gamma_bar=self.lambda_gamma_bar,
            b_mu=self.b_mu,
            b_lambda=self.b_lambda,
            epsilon_reg=self.epsilon_reg,
            theta_coeff=self.theta_coeff,
            gravity_force=f1,
        )

    def exact(self) -> Optional[ExpandingBubble]:
        if self.boundary != "expanding":
            return None
        return ExpandingBubble(
            alpha=self.alpha,
            r0=self.radius,
            rho_gamma0_bar=self.rho_gamma0,
            gamma_bar=self.gamma_bar,
            mu_gamma_bar=self.mu_gamma_bar,
            lambda_gamma_bar=self.lambda_gamma_bar,
            mu_plus=self.mu_plus,
            mu_minus=self.mu_minus,
        )

    def boundary_field(self):
        if self.boundary == "shear":
            return shear_boundary
        if self.boundary == "expanding":
            return self.exact().boundary
        return None

    def settings(self) -> StepSettings:
        return StepSettings(
            domain=self.domain(),
            params=self.physical(),
            scheme=self.scheme,
            tau=self.tau,
            n_fine=self.n_fine,
            n_coarse=self.n_coarse,
            xfem=self.xfem,
            numerical_diffusion=self.numdiff,
            boundary=self.boundary_field(),
        )

    def polygon(self) -> InterfacePolygon:
        if self.shape == "circle":
            return make_circle(self.center, self.radius, self.k_gamma)
        return make_ellipse(self.center, self.semi_axes[0], self.semi_axes[1], self.k_gamma)

    def n_steps(self) -> int:
        return int(round(self.t_max / self.tau))


def hole_area(config: ExperimentConfig) -> float:
    if config.domain_hole is None:
        return 0.0
    x0, x1, y0, y1 = config.domain_hole
    return (x1 - x0) * (y1 - y0)


def shear_boundary(z: np.ndarray, t: float = 0.0) -> np.ndarray:
    """``g(z) = (z_2 / 2, 0)``."""
    z = np.atleast_2d(z)
    return np.column_stack([0.5 * z[:, 1], np.zeros(len(z))])


def shear_surfactant(z: np.ndarray) -> np.ndarray:
    """Initial concentration ``1e-6 + [z_1]_+``."""
    return 1e-6 + np.maximum(z[:, 0], 0.0)


def expanding_k_gamma(inv_h: float, alpha: float = 0.15, r0: float = 0.5, t_max: float = 1.0) -> int:
    """Interface vertex count giving segment length ``h/3`` at the middle of the run."""
    r_mid = math.sqrt(r0**2 + alpha * t_max)
    return int(round(2 * math.pi * r_mid * 3 * inv_h))


def _expanding(inv_h: float = 3.0, tau: float = 1e-2) -> ExperimentConfig:
    return ExperimentConfig(
        preset="expanding",
        scheme=BGN,
        n_fine=int(round(2 * inv_h)),
        n_coarse=int(round(2 * inv_h)),
        k_gamma=expanding_k_gamma(inv_h),
        tau=tau,
        t_max=1.0,
        domain_box=[-1.0, 1.0, -1.0, 1.0],
        domain_hole=[-1 / 3, 1 / 3, -1 / 3, 1 / 3],
        rho_plus=0.0,
        rho_minus=0.0,
        mu_plus=1.0,
        mu_minus=1.0,
        eos=pe.CONSTANT,
        gamma_bar=1.0,
        mu_gamma_bar=1.0,
        lambda_gamma_bar=1.0,
        radius=0.5,
        rho_gamma0=1.0,
        u0="boundary",
        boundary="expanding",
        alpha=0.15,
        plot_times=[0.0, 0.5, 1.0],
    )


def _shear(surfactant: bool = False) -> ExperimentConfig:
    c = ExperimentConfig(
        preset="shear2d-surfactant" if surfactant else "shear2d",
        scheme=BGN,
        n_fine=16,
        n_coarse=4,
        k_gamma=32,
        tau=0.05,
        t_max=12.0,
        domain_box=[-5.0, 5.0, -2.0, 2.0],
        rho_plus=1.0,
        rho_minus=1.0,
        mu_plus=0.1,
        mu_minus=0.1,
        eos=pe.CONSTANT,
        gamma_bar=0.2,
        d_gamma=0.1,
        mu_gamma_bar=1.0,
        lambda_gamma_bar=1.0,
        radius=1.0,
        center=[0.0, 0.0],
        rho_gamma0=0.0,
        u0="boundary",
        boundary="shear",
        plot_times=[0.0, 4.0, 8.0, 12.0],
    )
    if surfactant:
        c = replace(
            c,
            eos=pe.LINEAR,
            beta=0.5,
            mu_gamma_bar=0.1,
            lambda_gamma_bar=0.1,
            b_mu=100.0,
            b_lambda=100.0,
            rho_gamma0=1.0,
            psi0="shear",
        )
    return c


def _rising(compare: bool = False) -> ExperimentConfig:
    return ExperimentConfig(
        preset="rising2d-compare" if compare else "rising2d",
        scheme=BGN,
        n_fine=32,
        n_coarse=8,
        k_gamma=32,
        tau=0.015,
        t_max=3.0,
        numdiff=True,
        domain_box=[0.0, 1.0, 0.0, 2.0],
        free_slip=["left", "right"],
        rho_plus=1000.0,
        rho_minus=100.0,
        mu_plus=10.0,
        mu_minus=1.0,
        eos=pe.LINEAR,
        gamma_bar=24.5,
        beta=0.5,
        d_gamma=0.1,
        mu_gamma_bar=0.1,
        lambda_gamma_bar=0.1,
        theta_coeff=0.05,
        gravity=[0.0, -0.98],
        center=[0.5, 0.5],
        radius=0.25,
        rho_gamma0=1.0,
        plot_times=[0.0, 1.0, 2.0, 3.0],
        compare_schemes=compare,
    )


def _relax() -> ExperimentConfig:
    return ExperimentConfig(
        preset="relax-ellipse",
        scheme=BGN,
        n_fine=8,
        n_coarse=8,
        k_gamma=32,
        tau=1e-3,
        t_max=0.5,
        domain_box=[-1.0, 1.0, -1.0, 1.0],
        rho_plus=1.0,
        rho_minus=1.0,
        mu_plus=1.0,
        mu_minus=1.0,
        eos=pe.CONSTANT,
        gamma_bar=1.0,
        mu_gamma_bar=0.5,
        lambda_gamma_bar=0.5,
        shape="ellipse",
        semi_axes=[0.5, 0.3],
        rho_gamma0=0.0,
        plot_times=[0.0, 0.5],
    )


PRESETS = {
    "expanding": _expanding,
    "convergence-uniform": _expanding,
    "shear2d": lambda: _shear(False),
    "shear2d-surfactant": lambda: _shear(True),
    "rising2d": lambda: _rising(False),
    "rising2d-compare": lambda: _rising(True),
    "relax-ellipse": _relax,
}


def preset(name: str) -> ExperimentConfig:
    """Fully populated configuration of a named experiment."""
    try:
        return PRESETS[name]().validate()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# --------------------------------------------------------------- running


def initial_for(config: ExperimentConfig):
    """Settings and level-0 state of a configuration."""
    st = config.settings()
    poly = config.polygon()
    psi0 = shear_surfactant if config.psi0 == "shear" else config.psi0_value
    g = st.boundary
    u0 = (lambda x: g(x, 0.0)) if (config.u0 == "boundary" and g is not None) else None
    kappa0 = None
    if config.scheme == BGN and config.shape == "circle":
        kappa0 = np.full(poly.n, -1.0 / config.radius)
    state = initial_state(st, poly, u0=u0, rho_gamma0=config.rho_gamma0, psi0=psi0, kappa0=kappa0)
    return st, state


@dataclass
class RunResult:
    status: str
    summary: dict
    records: list
    snapshots: dict
    final_state: object = None
    error: Optional[BaseException] = None

    @property
    def exit_code(self) -> int:
        return {"ok": EXIT_OK, "geometric_failure": EXIT_GEOMETRY, "solver_failure": EXIT_SOLVER}[self.status]


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path, rows: Sequence[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0])
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    Path(path).write_text(buf.getvalue())


def _rel_drift(values: Sequence[float]) -> float:
    v = np.asarray(values, float)
    ref = abs(v[0]) if v[0] != 0 else 1.0
    return float(np.max(np.abs(v - v[0])) / ref)


def _rel_step_drift(values: Sequence[float]) -> float:
    v = np.asarray(values, float)
    if len(v) < 2:
        return 0.0
    ref = np.maximum(np.abs(v[:-1]), np.finfo(float).tiny)
    return float(np.max(np.abs(np.diff(v)) / ref))


def simulate(config: ExperimentConfig, out_dir=None, keep_history: bool = True) -> RunResult:
    """Run one configuration; outputs are written when ``out_dir`` is given.

    Geometric and solver failures end the run early; the partial outputs,
    a failure record in the summary and a checkpoint of the last good
    state are kept.
    """
    config.validate()
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(config.to_json() + "\n")
    st, state = initial_for(config)
    exact = config.exact()
    records, info_rows, history = [], [], []
    snapshots = {0.0: state.polygon.points.copy()}
    plot_left = sorted(config.plot_times)

    def snap(s):
        if out is None:
            return
        tag = f"{s.t:.6f}"
        f = {"rho_gamma": s.rho_gamma, "psi": s.psi}
        write_polyline_csv(s.polygon, out / f"interface_t{tag}.csv", f)
        write_polyline_vtk(s.polygon, out / f"interface_t{tag}.vtk", f)

    def record(s):
        d = diagnostics(s).row()
        d["step"] = s.m
        if s.info is not None:
            d.update(
                residual=s.info.residual,
                energy_old=s.info.energy_old,
                energy_new=s.info.energy_new,
                work=s.info.work,
            )
        else:
            d.update(residual=0.0, energy_old=float("nan"), energy_new=float("nan"), work=0.0)
        records.append(d)

    record(state)
    snap(state)
    status, err = "ok", None
    n = config.n_steps()
    for _ in range(n):
        try:
            new = step(state)
        except GeometricError as exc:
            status, err = "geometric_failure", exc
            break
        except SolverError as exc:
            status, err = "solver_failure", exc
            break
        state = new
        record(state)
        if exact is not None and keep_history:
            history.append(HistoryEntry(state.t, state.polygon.points, state.U.space, state.U.coeffs, state.P))
        while plot_left and plot_left[0] <= state.t + 1e-9 * config.tau:
            snapshots[state.t] = state.polygon.points.copy()
            plot_left.pop(0)
        if config.output_every and state.m % config.output_every == 0:
            snap(state)
    snapshots[state.t] = state.polygon.points.copy()
    if not (config.output_every and state.m % config.output_every == 0):
        snap(state)

    summary = {
        "status": status,
        "preset": config.preset,
        "scheme": config.scheme,
        "steps": state.m,
        "t_final": state.t,
        "surface_mass_drift": _rel_drift([r["total_surface_mass"] for r in records]) if records[0]["total_surface_mass"] else 0.0,
        "surfactant_drift": _rel_drift([r["total_surfactant"] for r in records]),
        "surface_mass_step_drift": _rel_step_drift([r["total_surface_mass"] for r in records]),
        "surfactant_step_drift": _rel_step_drift([r["total_surfactant"] for r in records]),
        "area_drift": _rel_drift([r["area"] for r in records]),
        "area_change": (records[-1]["area"] - records[0]["area"]) / records[0]["area"],
        "edge_ratio_final": records[-1]["edge_ratio"],
        "taylor_deformation": taylor_deformation(state.polygon),
        "psi_min": min(r["psi_min"] for r in records),
        "rho_gamma_min": min(r["rho_gamma_min"] for r in records),
    }
    if exact is not None and keep_history and history:
        x, u, pc, th = error_norms(history, exact, config.tau, st.domain.area, hole_area(config))
        summary.update(X_err=x, U_err=u, Pc_err=pc, theta_err=th)
    if err is not None:
        summary["failure"] = f"{type(err).__name__}: {err}"
    if out is not None:
        write_csv(out / "diagnostics.csv", records)
        if err is not None:
            save_checkpoint(state, out / "failure_state.bin")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        write_interface_svg(out / "interface.svg", snapshots, st.domain)
        write_series_svg(
            out / "energy.svg",
            [r["t"] for r in records],
            {"energy": [r["kinetic"] + r["surface_kinetic"] + r["interface_energy"] for r in records]},
        )
    return RunResult(status, summary, records, snapshots, state, err)


def run_experiment(config: ExperimentConfig, out_dir) -> dict:
    """Run a configuration (both schemes if ``compare_schemes``); return the summary.

    With ``compare_schemes`` the two runs go to ``gd/`` and ``bgn/`` and
    ``edge_ratio.csv`` collects both edge-ratio series.
    """
    out = Path(out_dir)
    if not config.compare_schemes:
        return simulate(config, out).summary
    results = {}
    for scheme in (GD, BGN):
        c = replace(config, scheme=scheme, compare_schemes=False, numdiff=config.numdiff and scheme == BGN)
        results[scheme] = simulate(c, out / scheme)
    rows = []
    for a, b in zip(results[GD].records, results[BGN].records):
        rows.append({"t": a["t"], "edge_ratio_gd": a["edge_ratio"], "edge_ratio_bgn": b["edge_ratio"]})
    write_csv(out / "edge_ratio.csv", rows)
    summary = {s: r.summary for s, r in results.items()}
    failed = [r.status for r in results.values() if r.status != "ok"]
    summary["status"] = failed[0] if failed else "ok"
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


STUDY_COLUMNS = ["inv_h", "tau", "X_err", "U_err", "Pc_err", "theta_err"]


def parse_rows(spec: str):
    """``"3:1e-2,6:1e-3"`` -> ``[(3.0, 0.01), (6.0, 0.001)]``."""
    rows = []
    for item in spec.split(","):
        inv_h, tau = item.split(":")
        rows.append((float(inv_h), float(tau)))
    return rows


def convergence_study(base: ExperimentConfig, rows, out_path=None) -> str:
    """One CSV row of error norms per ``(1/h, tau)`` on uniform meshes."""
    if base.boundary != "expanding":
        raise ValueError("the convergence study needs the expanding-bubble exact solution")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STUDY_COLUMNS)
    for inv_h, tau in rows:
        half = min(base.domain_box[1] - base.domain_box[0], base.domain_box[3] - base.domain_box[2]) / 2
        n = int(round(2 * half * inv_h))
        c = replace(
            base,
            n_fine=n,
            n_coarse=n,
            tau=tau,
            k_gamma=expanding_k_gamma(inv_h, base.alpha, base.radius, base.t_max),
        )
        res = simulate(c)
        if res.status != "ok":
            raise res.error
        s = res.summary
        w.writerow([_fmt(float(inv_h)), _fmt(float(tau))] + [_fmt(s[k]) for k in STUDY_COLUMNS[2:]])
    text = buf.getvalue()
    if out_path is not None:
        Path(out_path).write_text(text)
    return text


# ------------------------------------------------------------------- SVG


def _svg_frame(width, height, body: list) -> str:
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


GREYS = ["#000000", "#444444", "#777777", "#aaaaaa"]


def write_interface_svg(path, snapshots: dict, domain: Domain, width: int = 400) -> None:
    """Domain outline with the interface at each stored time overlaid."""
    x0, x1, y0, y1 = domain.box
    scale = width / (x1 - x0)
    height = int(round((y1 - y0) * scale))

    def pt(p):
        return f"{(p[0] - x0) * scale:.2f},{(y1 - p[1]) * scale:.2f}"

    body = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="none" stroke="black"/>']
    if domain.hole is not None:
        hx0, hx1, hy0, hy1 = domain.hole
        body.append(
            f'<rect x="{(hx0 - x0) * scale:.2f}" y="{(y1 - hy1) * scale:.2f}" width="{(hx1 - hx0) * scale:.2f}" '
            f'height="{(hy1 - hy0) * scale:.2f}" fill="#dddddd" stroke="black"/>'
        )
    for i, (t, pts) in enumerate(sorted(snapshots.items())):
        poly = " ".join(pt(p) for p in pts)
        body.append(f'<polygon points="{poly}" fill="none" stroke="{GREYS[i % len(GREYS)]}"><title>t={t:g}</title></polygon>')
    Path(path).write_text(_svg_frame(width, height, body))


def write_series_svg(path, t, series: dict, width: int = 480, height: int = 300) -> None:
    """Line plot of one or more series against ``t``."""
    t = np.asarray(t, float)
    allv = np.concatenate([np.asarray(v, float) for v in series.values()])
    allv = allv[np.isfinite(allv)]
    lo, hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    if hi == lo:
        hi = lo + 1.0
    t0, t1 = float(t.min()), float(t.max()) if t.max() > t.min() else float(t.min()) + 1.0
    pad = 40

    def xy(a, b):
        return f"{pad + (a - t0) / (t1 - t0) * (width - 2 * pad):.2f},{height - pad - (b - lo) / (hi - lo) * (height - 2 * pad):.2f}"

    body = [
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{pad - 8}" font-size="11">{hi:.6g}</text>',
        f'<text x="{pad}" y="{height - pad + 14}" font-size="11">{lo:.6g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 14}" font-size="11" text-anchor="end">t={t1:g}</text>',
    ]
    for i, (name, v) in enumerate(series.items()):
        pts = " ".join(xy(a, b) for a, b in zip(t, v) if np.isfinite(b))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{GREYS[i % len(GREYS)]}"><title>{name}</title></polyline>')
    Path(path).write_text(_svg_frame(width, height, body))


# ------------------------------------------------------------------- CLI


def _on_off(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return v == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="JSON configuration file")
    src.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--scheme", choices=[GD, BGN])
    r.add_argument("--nf", type=int, help="N_f, fine bulk mesh parameter")
    r.add_argument("--nc", type=int, help="N_c, coarse bulk mesh parameter")
    r.add_argument("--kgamma", type=int, help="number of interface vertices")
    r.add_argument("--tau", type=float)
    r.add_argument("--tmax", type=float)
    r.add_argument("--xfem", type=_on_off)
    r.add_argument("--numdiff", type=_on_off)
    r.add_argument("--out", type=Path, default=Path("bsflow-out"))
    s = sub.add_parser("study", help="expanding-bubble convergence table")
    s.add_argument("--preset", default="expanding", choices=["expanding", "convergence-uniform"])
    s.add_argument("--rows", required=True, help='comma-separated "1/h:tau" pairs, e.g. "3:1e-2,6:1e-3"')
    s.add_argument("--scheme", choices=[GD, BGN])
    s.add_argument("--out", type=Path, default=Path("convergence.csv"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "study":
            base = preset(args.preset)
            if args.scheme:
                base = replace(base, scheme=args.scheme)
            text = convergence_study(base, parse_rows(args.rows), args.out)
            sys.stdout.write(text)
            return EXIT_OK
        if args.config is not None:
            config = ExperimentConfig.from_json(args.config.read_text())
        else:
            config = preset(args.preset)
        overrides = {
            "scheme": args.scheme,
            "n_fine": args.nf,
            "n_coarse": args.nc,
            "k_gamma": args.kgamma,
            "tau": args.tau,
            "t_max": args.tmax,
            "xfem": args.xfem,
            "numdiff": args.numdiff,
        }
        config = replace(config, **{k: v for k, v in overrides.items() if v is not None}).validate()
        summary = run_experiment(config, args.out)
    except GeometricError as exc:
        print(f"bsflow: geometric failure: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except SolverError as exc:
        print(f"bsflow: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"bsflow: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True))
    return {"ok": EXIT_OK, "geometric_failure": EXIT_GEOMETRY, "solver_failure": EXIT_SOLVER}[summary["status"]]
