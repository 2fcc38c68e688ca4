"""Physical parameters, equations of state and surface viscosities.

The surface energy density ``F`` and the surface tension ``gamma`` are
linked by ``gamma = F - r F'``.  Three equation-of-state kinds are
supported: a linear law, the Langmuir law and a constant tension.  All
functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

LINEAR = "linear"
LANGMUIR = "langmuir"
CONSTANT = "constant"
EOS_KINDS = (LINEAR, LANGMUIR, CONSTANT)

# Relative tolerance under which two values of F'_eps count as equal.
PSI_STAR_EQUAL_TOL = 1e-14


class DomainError(ValueError):
    """Raised when a concentration lies outside the domain of the EOS."""


@dataclass(frozen=True)
class EquationOfState:
    """Equation of state ``r -> gamma(r)``.

    Parameters
    ----------
    kind : {"linear", "langmuir", "constant"}
    gamma_bar : float
        Surface tension of the clean interface, ``gamma(0)``.
    beta : float
        Sensitivity to the concentration.  Ignored for ``"constant"``.
    psi_infinity : float
        Saturation concentration, only used by the Langmuir law.
    """

    kind: str = CONSTANT
    gamma_bar: float = 1.0
    beta: float = 0.0
    psi_infinity: float = math.inf

    def __post_init__(self):
        if self.kind not in EOS_KINDS:
            raise ValueError(f"unknown equation of state {self.kind!r}")
        if self.gamma_bar < 0:
            raise ValueError("gamma_bar must be nonnegative")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.kind == LANGMUIR and not (0 < self.psi_infinity < math.inf):
            raise ValueError("the Langmuir law needs a finite psi_infinity > 0")

    @property
    def is_constant(self) -> bool:
        return self.kind == CONSTANT or self.beta == 0.0


def _check_domain(eos: EquationOfState, r):
    r = np.asarray(r, dtype=float)
    if eos.kind == LANGMUIR and np.any(r >= eos.psi_infinity):
        raise DomainError("concentration must stay below psi_infinity")
    return r


def _ret(x, like):
    return float(x) if np.ndim(like) == 0 else x


def gamma(eos: EquationOfState, r):
    """Unregularized surface tension."""
    r = _check_domain(eos, r)
    if eos.is_constant:
        out = np.full_like(r, eos.gamma_bar)
    elif eos.kind == LINEAR:
        out = eos.gamma_bar * (1.0 - eos.beta * r)
    else:
        out = eos.gamma_bar * (1.0 + eos.beta * eos.psi_infinity * np.log1p(-r / eos.psi_infinity))
    return _ret(out, r)


def energy(eos: EquationOfState, r):
    """Unregularized energy density ``F(r)`` for ``r > 0``."""
    r = _check_domain(eos, r)
    if eos.is_constant:
        out = np.full_like(r, eos.gamma_bar)
    elif eos.kind == LINEAR:
        out = eos.gamma_bar * (1.0 + eos.beta * r * (np.log(r) - 1.0))
    else:
        pinf = eos.psi_infinity
        out = eos.gamma_bar * (
            1.0 + eos.beta * (r * np.log(r / (pinf - r)) + pinf * np.log((pinf - r) / pinf))
        )
    return _ret(out, r)


def energy_prime(eos: EquationOfState, r):
    """``F'(r)`` for ``r > 0``."""
    r = _check_domain(eos, r)
    if eos.is_constant:
        out = np.zeros_like(r)
    elif eos.kind == LINEAR:
        out = eos.gamma_bar * eos.beta * np.log(r)
    else:
        out = eos.gamma_bar * eos.beta * np.log(r / (eos.psi_infinity - r))
    return _ret(out, r)


def energy_second(eos: EquationOfState, r):
    """``F''(r)`` for ``r > 0``; nonnegative for every kind."""
    r = _check_domain(eos, r)
    if eos.is_constant:
        out = np.zeros_like(r)
    elif eos.kind == LINEAR:
        out = eos.gamma_bar * eos.beta / r
    else:
        pinf = eos.psi_infinity
        out = eos.gamma_bar * eos.beta * pinf / (r * (pinf - r))
    return _ret(out, r)


def f_eps(eos: EquationOfState, eps: float, r):
    """Regularized energy: ``F`` above ``eps``, quadratic extension below."""
    r = _check_domain(eos, r)
    if eos.is_constant:
        return _ret(np.full_like(r, eos.gamma_bar), r)
    lo = np.minimum(r, eps)
    hi = np.maximum(r, eps)
    quad = (
        energy(eos, eps)
        + energy_prime(eos, eps) * (lo - eps)
        + 0.5 * energy_second(eos, eps) * (lo - eps) ** 2
    )
    out = np.where(r >= eps, energy(eos, hi), quad)
    return _ret(out, r)


def fprime_eps(eos: EquationOfState, eps: float, r):
    """Derivative of :func:`f_eps`."""
    r = _check_domain(eos, r)
    if eos.is_constant:
        return _ret(np.zeros_like(r), r)
    lo = np.minimum(r, eps)
    hi = np.maximum(r, eps)
    lin = energy_prime(eos, eps) + energy_second(eos, eps) * (lo - eps)
    out = np.where(r >= eps, energy_prime(eos, hi), lin)
    return _ret(out, r)


def gamma_eps(eos: EquationOfState, eps: float, r):
    """Regularized tension, equal to ``f_eps - r * fprime_eps``."""
    r = _check_domain(eos, r)
    if eos.is_constant:
        return _ret(np.full_like(r, eos.gamma_bar), r)
    lo = np.minimum(r, eps)
    hi = np.maximum(r, eps)
    ext = gamma(eos, eps) + 0.5 * energy_second(eos, eps) * (eps**2 - lo**2)
    out = np.where(r >= eps, gamma(eos, hi), ext)
    return _ret(out, r)


def psi_star_eps(eos: EquationOfState, eps: float, psi_a, psi_b):
    """Edge value making the discrete chain rule for ``gamma_eps`` exact.

    Returns ``-(gamma_eps(b) - gamma_eps(a)) / (F'_eps(b) - F'_eps(a))``
    and the midpoint where the two derivative values coincide.  For the
    linear law and ``a, b >= eps`` this is the logarithmic mean.
    """
    a = np.asarray(psi_a, dtype=float)
    b = np.asarray(psi_b, dtype=float)
    fa = np.asarray(fprime_eps(eos, eps, a))
    fb = np.asarray(fprime_eps(eos, eps, b))
    dg = np.asarray(gamma_eps(eos, eps, b)) - np.asarray(gamma_eps(eos, eps, a))
    df = fb - fa
    equal = np.abs(df) <= PSI_STAR_EQUAL_TOL * np.maximum(1.0, np.abs(fa))
    safe = np.where(equal, 1.0, df)
    out = np.where(equal, 0.5 * (a + b), -dg / safe)
    return _ret(out, np.broadcast(a, b))


def _ramp(r):
    return np.maximum(np.asarray(r, dtype=float), 0.0)


Field = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class PhysicalParams:
    """Material and model constants.

    Forces are callables ``(points (n, 2), t) -> (n, 2)``; ``None`` means
    zero.  The numerical diffusion function is ``theta(s) = theta_coeff*s``.
    """

    rho_plus: float = 1.0
    rho_minus: float = 1.0
    mu_plus: float = 1.0
    mu_minus: float = 1.0
    eos: EquationOfState = field(default_factory=EquationOfState)
    d_gamma: float = 0.0
    mu_gamma_bar: float = 0.0
    lambda_gamma_bar: float = 0.0
    b_mu: float = 0.0
    b_lambda: float = 0.0
    epsilon_reg: float = 1e-8
    theta_coeff: float = 0.0
    gravity_force: Optional[Field] = None
    extra_force: Optional[Field] = None

    def __post_init__(self):
        if self.rho_plus < 0 or self.rho_minus < 0:
            raise ValueError("densities must be nonnegative")
        if self.mu_plus <= 0 or self.mu_minus <= 0:
            raise ValueError("bulk viscosities must be positive")
        if self.lambda_gamma_bar + 2.0 * self.mu_gamma_bar < 0:
            raise ValueError("need lambda_gamma_bar + 2 mu_gamma_bar >= 0")
        if self.mu_gamma_bar < 0:
            raise ValueError("mu_gamma_bar must be nonnegative")
        if self.epsilon_reg <= 0:
            raise ValueError("epsilon_reg must be positive")
        if self.d_gamma < 0 or self.theta_coeff < 0:
            raise ValueError("diffusivities must be nonnegative")

    @property
    def gamma_bar(self) -> float:
        return self.eos.gamma_bar

    def theta(self, s: float) -> float:
        """Numerical diffusion coefficient for interface mesh size ``s``."""
        return self.theta_coeff * s

    def with_(self, **kw) -> "PhysicalParams":
        return replace(self, **kw)


def mu_gamma_of(params: PhysicalParams, r):
    """Surface shear viscosity ``mu_bar (1 + b_mu [r]_+)``."""
    out = params.mu_gamma_bar * (1.0 + params.b_mu * _ramp(r))
    return _ret(out, r)


def lambda_gamma_of(params: PhysicalParams, r):
    """Surface dilatational parameter ``lambda_bar (1 + b_lambda [r]_+)``."""
    out = params.lambda_gamma_bar * (1.0 + params.b_lambda * _ramp(r))
    return _ret(out, r)
