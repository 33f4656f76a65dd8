"""Power kernels, Caputo derivatives of monomials and the Mittag-Leffler function."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

# Series evaluation of E_alpha stops once a term drops below this fraction of the sum.
ML_SERIES_RTOL = 1e-16
ML_MAX_TERMS = 10_000
# Beyond this |z| the Mittag-Leffler value is only reported as saturated.
ML_ZMAX = 50.0
# exp(x) overflows a double for x above roughly 709.
_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def _check_gamma_pole(beta: float) -> None:
    if beta <= 0 and float(beta).is_integer():
        raise DomainError(f"Gamma has a pole at beta={beta}")


def omega(beta: float, t):
    """Power kernel ``t**(beta-1) / Gamma(beta)``.

    Accepts scalar or array ``t``. At ``t = 0`` the kernel is 0 when
    ``beta > 1`` and undefined otherwise.
    """
    _check_gamma_pole(beta)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("omega is only defined for t >= 0")
    if np.any(t_arr == 0) and beta <= 1:
        raise DomainError(f"omega_{beta}(0) is singular")
    with np.errstate(divide="ignore"):
        out = t_arr ** (beta - 1.0) * special.rgamma(beta)
    if out.ndim == 0:
        return float(out)
    return out


def caputo_of_power(alpha: float, sigma: float, t):
    """Exact Caputo derivative of order ``alpha`` of ``omega(1 + sigma, .)`` at ``t``."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    if np.any(np.asarray(t) <= 0):
        raise DomainError("t must be positive")
    return omega(1.0 + sigma - alpha, t)


class LogMittagLeffler(NamedTuple):
    log_value: float
    sign: float
    saturated: bool


def _ml_series_positive(alpha: float, z: float) -> float | None:
    # log-space accumulation; every term is positive
    log_z = math.log(z)
    log_terms = []
    log_sum = -math.inf
    for k in range(ML_MAX_TERMS):
        lt = k * log_z - math.lgamma(1.0 + alpha * k)
        log_terms.append(lt)
        log_sum = np.logaddexp(log_sum, lt)
        # terms eventually decrease monotonically
        if k > 1 and lt < log_terms[-2] and lt - log_sum < math.log(ML_SERIES_RTOL):
            return float(log_sum)
    return None


def _ml_series(alpha: float, z: float) -> float:
    total = 0.0
    for k in range(ML_MAX_TERMS):
        term = z**k * special.rgamma(1.0 + alpha * k)
        total += term
        if k > 0 and abs(term) < ML_SERIES_RTOL * abs(total):
            break
    return total


def _ml_asymptotic_log(alpha: float, z: float) -> float:
    # E_a(z) = exp(z^(1/a)) / a - sum_k z^-k / Gamma(1 - a k); the tail is
    # negligible once exp(z^(1/a)) dwarfs it
    x = z ** (1.0 / alpha)
    tail = sum(z ** (-k) * special.rgamma(1.0 - alpha * k) for k in range(1, 6))
    lead = x - math.log(alpha)
    return lead + math.log1p(-tail * math.exp(-lead)) if lead < _LOG_FLOAT_MAX else lead


def _ml_negative(alpha: float, x: float) -> float:
    # E_a(-x) = int_0^inf exp(-r x^(1/a)) K_a(r) dr with a positive spectral density
    s = x ** (1.0 / alpha)
    sin_pa, cos_pa = math.sin(alpha * math.pi), math.cos(alpha * math.pi)

    def density(r):
        ra = r**alpha
        return math.exp(-r * s) * sin_pa / math.pi / (ra * ra + 2.0 * ra * cos_pa + 1.0)

    # r^(alpha - 1) near 0 goes into the algebraic weight
    head, _ = integrate.quad(density, 0.0, 1.0, weight="alg", wvar=(alpha - 1.0, 0.0),
                             epsabs=0.0, epsrel=1e-13, limit=200)
    tail, _ = integrate.quad(lambda r: density(r) * r ** (alpha - 1.0), 1.0, np.inf,
                             epsabs=0.0, epsrel=1e-13, limit=200)
    return head + tail


def log_mittag_leffler(alpha: float, z: float) -> LogMittagLeffler:
    """``log|E_alpha(z)|`` with a saturation flag.

    The flag is set when ``z > 50`` or when the value overflows a double;
    the log value is then taken from the leading exponential asymptote.
    """
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    z = float(z)
    if z > 0:
        x = z ** (1.0 / alpha)
        if z > ML_ZMAX:
            return LogMittagLeffler(_ml_asymptotic_log(alpha, z), 1.0, True)
        if x > 40.0:
            log_val = _ml_asymptotic_log(alpha, z)
            return LogMittagLeffler(log_val, 1.0, log_val > _LOG_FLOAT_MAX)
        log_val = _ml_series_positive(alpha, z)
        if log_val is None:
            log_val = _ml_asymptotic_log(alpha, z)
        return LogMittagLeffler(log_val, 1.0, log_val > _LOG_FLOAT_MAX)
    value = mittag_leffler(alpha, z)
    return LogMittagLeffler(math.log(abs(value)) if value != 0 else -math.inf,
                            math.copysign(1.0, value), False)


def mittag_leffler(alpha: float, z: float) -> float:
    """One-parameter Mittag-Leffler function ``E_alpha(z)`` for real ``z``.

    Returns ``inf`` when the value saturates; use :func:`log_mittag_leffler`
    to get the flag and the log-scale value.
    """
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    z = float(z)
    if z > 0:
        res = log_mittag_leffler(alpha, z)
        return math.inf if res.saturated else math.exp(res.log_value)
    if z == 0:
        return 1.0
    if alpha == 1.0:
        return math.exp(z)
    if z >= -1.0:
        return _ml_series(alpha, z)
    if z < -ML_ZMAX:
        # completely monotone decay; leading term of the algebraic asymptote
        return -sum((-z) ** (-k) * (-1) ** k * special.rgamma(1.0 - alpha * k) for k in range(1, 6))
    return _ml_negative(alpha, -z)
