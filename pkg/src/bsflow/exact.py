"""Radially expanding bubble: an exact solution with a point source at the origin.

The velocity ``u = alpha z / |z|^d`` is divergence free away from the
origin, so the domain must exclude it.  The circle of radius ``r(t)``
moves with the flow; the pressure jumps by ``theta(t)`` across it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fem import QUAD_BARY, QUAD_W, P2Space, interpolate_I2


@dataclass(frozen=True)
class ExpandingBubble:
    """Parameters of the exact solution (``d = 2`` unless stated)."""

    alpha: float = 0.15
    r0: float = 0.5
    rho_gamma0_bar: float = 1.0
    gamma_bar: float = 1.0
    mu_gamma_bar: float = 1.0
    lambda_gamma_bar: float = 1.0
    mu_plus: float = 1.0
    mu_minus: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")

    def radius(self, t):
        d = self.dim
        return (self.r0**d + self.alpha * np.asarray(t, float) * d) ** (1.0 / d)

    def velocity(self, z: np.ndarray, t: float = 0.0) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, float))
        r2 = np.einsum("nd,nd->n", z, z)
        if np.any(r2 == 0):
            raise ValueError("the exact velocity is singular at the origin")
        return self.alpha * z / r2[:, None] ** (self.dim / 2)

    def boundary(self, z: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.velocity(z, t)

    def force(self, z: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Body force ``alpha^2 (1 - d) z |z|^{-2d}`` (multiplied by the bulk density)."""
        z = np.atleast_2d(np.asarray(z, float))
        r2 = np.einsum("nd,nd->n", z, z)
        return self.alpha**2 * (1 - self.dim) * z / r2[:, None] ** self.dim

    def rho_gamma(self, t):
        return (self.r0 / self.radius(t)) ** (self.dim - 1) * self.rho_gamma0_bar

    def theta(self, t):
        """Pressure jump across the interface."""
        d = self.dim
        r = self.radius(t)
        a = self.alpha
        surf = self.gamma_bar + a / r**d * (2 * self.mu_gamma_bar + (d - 1) * self.lambda_gamma_bar)
        surf = surf - a**2 * (self.r0 / r**3) ** (d - 1) * self.rho_gamma0_bar
        return surf * (d - 1) / r + 2 * a * (d - 1) / r**d * (self.mu_plus - self.mu_minus)

    def inner_area(self, t, excluded_area: float = 0.0):
        """Measure of the inner phase; ``excluded_area`` is the part of the disc outside the domain."""
        return np.pi * self.radius(t) ** 2 - excluded_area

    def pressure(self, z: np.ndarray, t: float, domain_area: float, excluded_area: float = 0.0) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, float))
        inside = np.hypot(z[:, 0], z[:, 1]) < self.radius(t)
        return self.theta(t) * (inside - self.inner_area(t, excluded_area) / domain_area)

    def pressure_constant(self, t: float, domain_area: float, excluded_area: float = 0.0) -> float:
        """``p_c = p - theta chi_{Omega_-}``, a constant.

        The point source must lie outside the domain, so a hole around the
        origin usually sits inside the bubble; pass its area as
        ``excluded_area``.
        """
        return float(-self.theta(t) * self.inner_area(t, excluded_area) / domain_area)

    def exact_state(self, t: float, point):
        """``(r, u, p, rho_Gamma, theta, f1, g)`` at one point (domain area unknown: ``p`` omits the mean)."""
        z = np.atleast_2d(point)
        r = float(self.radius(t))
        u = self.velocity(z, t)[0]
        p = float(self.theta(t) * (np.hypot(*z[0]) < r))
        return r, u, p, float(self.rho_gamma(t)), float(self.theta(t)), self.force(z, t)[0], u


@dataclass
class HistoryEntry:
    """What the error norms need from one time level."""

    t: float
    points: np.ndarray
    space: P2Space
    U: np.ndarray
    P: np.ndarray  # P1 part followed by the enrichment coefficient


def interface_error(exact: ExpandingBubble, t: float, points: np.ndarray) -> float:
    """``max_k | |q_k| - r(t) |``, the distance to the exact circle."""
    return float(np.max(np.abs(np.hypot(points[:, 0], points[:, 1]) - exact.radius(t))))


def velocity_error(exact: ExpandingBubble, t: float, space: P2Space, U: np.ndarray) -> float:
    """Max over P2 nodes of ``|U - I2 u|``."""
    Iu = interpolate_I2(space, lambda x: exact.velocity(x, t)).coeffs
    d = (U - Iu).reshape(2, -1)
    return float(np.max(np.hypot(d[0], d[1])))


def p1_constant_error(space: P2Space, p1: np.ndarray, const: float) -> float:
    """``|| P_c - const ||_{L2}`` for a P1 field on the space's mesh."""
    mesh = space.mesh
    lam = QUAD_BARY  # (q, 3)
    vals = np.einsum("qj,tj->tq", lam, p1[mesh.triangles]) - const
    return float(np.sqrt(np.sum(mesh.areas[:, None] * QUAD_W[None, :] * vals**2)))


def error_norms(
    history: Sequence[HistoryEntry],
    exact: ExpandingBubble,
    tau: float,
    domain_area: float,
    excluded_area: float = 0.0,
):
    """``(X_err, U_err, Pc_err, theta_err)`` over levels ``1..M``.

    ``excluded_area`` is the measure of the disc swept by the bubble that
    lies outside the domain (the hole around the source).

    The discrete ``P_c`` is the P1 part of the pressure, since the
    enrichment coefficient multiplies the characteristic function of the
    inner phase at the previous level.
    """
    x_err = u_err = 0.0
    pc2 = th2 = 0.0
    for h in history:
        x_err = max(x_err, interface_error(exact, h.t, h.points))
        u_err = max(u_err, velocity_error(exact, h.t, h.space, h.U))
        nV = h.space.mesh.n_vertices
        if len(h.P) != nV + 1:
            raise ValueError("pressure errors need the enrichment coefficient")
        pc2 += p1_constant_error(h.space, h.P[:nV], exact.pressure_constant(h.t, domain_area, excluded_area)) ** 2
        th2 += (h.P[nV] - float(exact.theta(h.t))) ** 2
    return x_err, u_err, float(np.sqrt(tau * pc2)), float(np.sqrt(tau * th2))

