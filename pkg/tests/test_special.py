import math

import mpmath
import numpy as np
import pytest
from scipy import integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from fraccn.special import (DomainError, caputo_of_power, log_mittag_leffler, mittag_leffler,
                            omega)


def test_omega_trivial_values():
    assert omega(1.0, 7.3) == 1.0
    assert omega(2.0, 0.5) == 0.5
    assert omega(3.0, 0.0) == 0.0


def test_omega_half_matches_mpmath():
    # oracle: 1/Gamma(1/2) at 30 digits
    ref = float(1 / mpmath.gamma(mpmath.mpf(1) / 2))
    assert omega(0.5, 1.0) == pytest.approx(ref, rel=1e-15)
    assert ref == pytest.approx(0.564189583547756, rel=1e-14)


@pytest.mark.parametrize("beta,t", [(1.0, 0.0), (0.4, 0.0), (0.0, 1.0), (-2.0, 1.0)])
def test_omega_domain_errors(beta, t):
    with pytest.raises(DomainError):
        omega(beta, t)


def test_omega_array_input():
    t = np.array([0.25, 1.0, 4.0])
    np.testing.assert_allclose(omega(2.5, t), t**1.5 / math.gamma(2.5), rtol=1e-15)


@settings(max_examples=60, deadline=None)
@given(beta=st.floats(0.2, 3.0), t=st.floats(0.05, 5.0))
def test_omega_derivative_relation(beta, t):
    h = 1e-6 * t
    fd = (omega(beta + 1, t + h) - omega(beta + 1, t - h)) / (2 * h)
    assert fd == pytest.approx(omega(beta, t), rel=1e-6)


def test_caputo_of_power_examples():
    assert caputo_of_power(0.5, 0.5, 1.0) == pytest.approx(1.0, rel=1e-15)
    assert caputo_of_power(0.4, 1.4, 1.0) == pytest.approx(1.0, rel=1e-15)
    ref = float(mpmath.mpf(0.5) ** mpmath.mpf(0.4) / mpmath.gamma(mpmath.mpf(1.4)))
    assert caputo_of_power(0.4, 0.8, 0.5) == pytest.approx(ref, rel=1e-14)


@pytest.mark.parametrize("alpha,sigma,t", [(0.3, 0.7, 0.8), (0.6, 1.6, 1.3), (0.8, 0.4, 0.5)])
def test_caputo_of_power_against_fractional_integral(alpha, sigma, t):
    # Caputo derivative as a weakly singular integral of v'(s) = omega_sigma(s)
    # both endpoint singularities go into the algebraic weight s^(sigma-1) (t-s)^(-alpha)
    val, _ = integrate.quad(lambda s: 1.0, 0.0, t, weight="alg", wvar=(sigma - 1.0, -alpha))
    val /= math.gamma(1 - alpha) * math.gamma(sigma)
    assert caputo_of_power(alpha, sigma, t) == pytest.approx(val, rel=1e-6)


@pytest.mark.parametrize("alpha,sigma,t", [(1.0, 0.5, 1.0), (0.5, 0.0, 1.0), (0.5, 0.5, 0.0)])
def test_caputo_of_power_domain(alpha, sigma, t):
    with pytest.raises(DomainError):
        caputo_of_power(alpha, sigma, t)


def test_mittag_leffler_examples():
    assert mittag_leffler(0.7, 0.0) == 1.0
    assert mittag_leffler(1.0, 1.0) == pytest.approx(2.718281828459045, rel=1e-14)
    # E_{1/2}(z) = exp(z^2) erfc(-z)
    ref = float(mpmath.exp(1) * mpmath.erfc(-1))
    assert ref == pytest.approx(5.008980080762283, rel=1e-14)
    assert mittag_leffler(0.5, 1.0) == pytest.approx(ref, rel=1e-12)


def _ml_oracle(alpha, z):
    x = abs(z) ** (1 / alpha)
    if z < 0 and x > 300:
        # series cancellation is hopeless; integrate the spectral density at high precision
        with mpmath.workdps(40):
            a, s = mpmath.mpf(alpha), mpmath.mpf(x)
            sa, ca = mpmath.sinpi(a), mpmath.cospi(a)
            dens = lambda r: (mpmath.exp(-r * s) * sa / mpmath.pi * r ** (a - 1)
                              / (r ** (2 * a) + 2 * r**a * ca + 1))
            return float(mpmath.quad(dens, [0, 1 / s, 1, mpmath.inf]))
    # largest series term is about exp(x); carry that many extra digits
    with mpmath.workdps(int(x / 2.3) + 40):
        zz, a = mpmath.mpf(z), mpmath.mpf(alpha)
        total, k = mpmath.mpf(0), 0
        while True:
            term = zz**k / mpmath.gamma(1 + a * k)
            total += term
            if k > x and abs(term) < mpmath.mpf(10) ** -30 * abs(total):
                return float(total)
            k += 1


CASES = [(a, z) for a in (0.3, 0.5, 0.8, 1.0) for z in (-40.0, -8.0, -1.5, -0.3, 0.7, 3.0, 12.0, 45.0)
         if z < 0 or z ** (1 / a) < 600]


@pytest.mark.parametrize("alpha,z", CASES)
def test_mittag_leffler_ten_digits(alpha, z):
    assert mittag_leffler(alpha, z) == pytest.approx(_ml_oracle(alpha, z), rel=1e-10)


def test_mittag_leffler_overflow_is_inf():
    assert mittag_leffler(0.3, 45.0) == math.inf


def test_mittag_leffler_monotone_on_grid():
    for alpha in (0.2, 0.5, 0.9):
        logs = [log_mittag_leffler(alpha, z).log_value for z in np.linspace(0, 50, 101)]
        assert np.all(np.diff(logs) > 0)


def test_mittag_leffler_saturation_flag():
    res = log_mittag_leffler(0.4, 1e4)
    assert res.saturated
    assert np.isfinite(res.log_value) and res.log_value > 700
    small = log_mittag_leffler(0.4, 2.0)
    assert not small.saturated
    assert math.exp(small.log_value) == pytest.approx(mittag_leffler(0.4, 2.0), rel=1e-12)
