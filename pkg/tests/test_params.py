import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsflow import params as pe

LIN = pe.EquationOfState(pe.LINEAR, gamma_bar=0.2, beta=0.5)
LANG = pe.EquationOfState(pe.LANGMUIR, gamma_bar=1.0, beta=0.5, psi_infinity=2.0)
CONST = pe.EquationOfState(pe.CONSTANT, gamma_bar=0.7)
EPS = 1e-8


def test_linear_gamma_value():
    assert pe.gamma(LIN, 1.0) == pytest.approx(0.1, abs=1e-15)


def test_constant_gamma_any_r():
    for r in (-3.0, 0.0, 0.5, 10.0):
        assert pe.gamma(CONST, r) == 0.7


def test_langmuir_gamma_at_zero():
    assert pe.gamma(LANG, 0.0) == 1.0


def test_langmuir_domain_error():
    with pytest.raises(pe.DomainError):
        pe.gamma(LANG, 2.0)
    with pytest.raises(pe.DomainError):
        pe.f_eps(LANG, EPS, 3.0)


def test_beta_zero_is_constant():
    eos = pe.EquationOfState(pe.LINEAR, gamma_bar=1.3, beta=0.0)
    assert eos.is_constant
    assert pe.gamma(eos, 5.0) == 1.3
    assert pe.psi_star_eps(eos, EPS, 1.0, 3.0) == 2.0


@pytest.mark.parametrize("kw", [dict(kind="bogus"), dict(beta=-1.0), dict(gamma_bar=-0.1)])
def test_eos_validation(kw):
    with pytest.raises(ValueError):
        pe.EquationOfState(**kw)


def test_langmuir_needs_finite_saturation():
    with pytest.raises(ValueError):
        pe.EquationOfState(pe.LANGMUIR, beta=1.0, psi_infinity=math.inf)


@pytest.mark.parametrize("eos", [LIN, LANG])
def test_regularized_identity(eos):
    r = np.concatenate([np.array([EPS / 2, EPS, 2 * EPS]), np.linspace(-1.0, 1.9, 60)])
    lhs = pe.gamma_eps(eos, EPS, r)
    rhs = pe.f_eps(eos, EPS, r) - r * pe.fprime_eps(eos, EPS, r)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-14 * max(1.0, np.abs(rhs).max()) + 1e-14)


def test_regularized_identity_tight_near_eps():
    # the quadratic branch holds the identity exactly; keep scales O(1)
    eos = pe.EquationOfState(pe.LINEAR, gamma_bar=1.0, beta=1.0)
    eps = 0.1
    r = np.array([eps / 2, eps, 2 * eps, -0.3, 0.0])
    lhs = pe.gamma_eps(eos, eps, r)
    rhs = pe.f_eps(eos, eps, r) - r * pe.fprime_eps(eos, eps, r)
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)


def test_regularized_matches_unregularized_above_eps():
    r = np.linspace(2 * EPS, 1.5, 20)
    np.testing.assert_allclose(pe.f_eps(LANG, EPS, r), pe.energy(LANG, r), rtol=1e-15)
    np.testing.assert_allclose(pe.gamma_eps(LIN, EPS, r), pe.gamma(LIN, r), rtol=1e-15)


def test_negative_part_lower_bound():
    eos = pe.EquationOfState(pe.LINEAR, gamma_bar=2.0, beta=0.5)
    for r in (-1e-3, -0.5, -4.0):
        assert pe.f_eps(eos, EPS, r) >= 0.5 / EPS * eos.gamma_bar * eos.beta * r**2


@pytest.mark.parametrize("eos", [LIN, LANG])
def test_convexity_sampled(eos):
    r = np.linspace(1e-6, 1.99, 500)
    assert np.all(pe.energy_second(eos, r) >= 0)


@pytest.mark.parametrize("eos", [LIN, LANG])
def test_energy_derivative_finite_difference(eos):
    r = np.linspace(0.1, 1.5, 9)
    d = 1e-6
    fd = (pe.energy(eos, r + d) - pe.energy(eos, r - d)) / (2 * d)
    np.testing.assert_allclose(pe.energy_prime(eos, r), fd, rtol=1e-7)


@given(st.floats(0.0, 1.9), st.floats(0.0, 1.9))
def test_gamma_monotone(r1, r2):
    lo, hi = sorted((r1, r2))
    for eos in (LIN, LANG):
        assert pe.gamma(eos, hi) <= pe.gamma(eos, lo) + 1e-15


def test_psi_star_logarithmic_mean():
    eos = pe.EquationOfState(pe.LINEAR, 1.0, 0.5)
    assert pe.psi_star_eps(eos, EPS, 1.0, math.e) == pytest.approx(math.e - 1.0, rel=1e-13)


def test_psi_star_equal_arguments():
    assert pe.psi_star_eps(LIN, EPS, 0.3, 0.3) == 0.3


@settings(max_examples=200)
@given(st.floats(-1.0, 1.9), st.floats(-1.0, 1.9))
def test_psi_star_chain_rule(a, b):
    """``psi* (F'(b) - F'(a)) = -(gamma(b) - gamma(a))`` whenever the branch is the quotient."""
    for eos in (LIN, LANG):
        ps = pe.psi_star_eps(eos, EPS, a, b)
        df = pe.fprime_eps(eos, EPS, b) - pe.fprime_eps(eos, EPS, a)
        dg = pe.gamma_eps(eos, EPS, b) - pe.gamma_eps(eos, EPS, a)
        assert ps * df == pytest.approx(-dg, rel=1e-9, abs=1e-9 * max(1.0, abs(dg)))


def test_surface_viscosity_laws():
    p = pe.PhysicalParams(mu_gamma_bar=0.1, lambda_gamma_bar=0.1, b_mu=100.0, b_lambda=100.0)
    assert pe.mu_gamma_of(p, 1.0) == pytest.approx(10.1)
    assert pe.mu_gamma_of(p, -1.0) == pytest.approx(0.1)
    assert pe.lambda_gamma_of(p, 0.5) == pytest.approx(0.1 * 51)
    q = pe.PhysicalParams(mu_gamma_bar=0.3)
    np.testing.assert_array_equal(pe.mu_gamma_of(q, np.array([-1.0, 0.0, 7.0])), 0.3)


@pytest.mark.parametrize(
    "kw",
    [
        dict(rho_plus=-1.0),
        dict(mu_minus=0.0),
        dict(mu_gamma_bar=1.0, lambda_gamma_bar=-2.5),
        dict(epsilon_reg=0.0),
        dict(d_gamma=-1.0),
    ],
)
def test_params_validation(kw):
    with pytest.raises(ValueError):
        pe.PhysicalParams(**kw)


def test_theta_is_linear_in_s():
    p = pe.PhysicalParams(theta_coeff=0.05)
    assert p.theta(0.2) == pytest.approx(0.01)
