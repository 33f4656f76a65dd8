"""Truncation errors of the discrete Caputo formula and their ECS majorants.

``Upsilon^{n-theta}`` is the exact Caputo derivative at ``t_{n-theta}`` minus the
discrete one. It splits into per-cell pieces, which are bounded cell by
cell through ``G_loc`` and ``G_his``. Convolving with the complementary
kernels gives the global consistency error.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from ._io import csv_target
from .complementary import ComplementaryTable, build_complementary
from .kernels import KernelTable, _w, apply_discrete_caputo
from .mesh import TimeMesh
from .special import DomainError, omega

QUAD_RTOL = 1e-10
_QUAD_KW = dict(epsabs=0.0, epsrel=1e-12, limit=200)
# above this ratio tau_k / (t_{n-theta} - t_{k-1}) the K-kernel is evaluated directly
_K_SERIES_MAX = 0.5
_K_TERMS = 80
# absolute slack of the ECS comparisons, relative to the size of the Caputo derivative
ECS_ATOL = 1e-12


@dataclass(frozen=True)
class ManufacturedFunction:
    """``v(t) = 1 + omega_{1+sigma}(t)`` or a cubic ``sum_m c_m t^m``.

    Use :meth:`power` or :meth:`polynomial`. Derivatives up to the third and
    the exact Caputo derivative are available in closed form.
    """

    kind: str
    sigma: float | None = None
    coeffs: tuple[float, ...] = ()

    @classmethod
    def power(cls, sigma: float) -> ManufacturedFunction:
        if sigma <= 0:
            raise DomainError("sigma must be positive")
        return cls("power", sigma=float(sigma))

    @classmethod
    def polynomial(cls, coeffs) -> ManufacturedFunction:
        coeffs = tuple(float(c) for c in coeffs)
        if len(coeffs) > 4:
            raise ValueError("polynomials of degree <= 3 only")
        return cls("poly", coeffs=coeffs + (0.0,) * (4 - len(coeffs)))

    @property
    def singular_exponent(self) -> float | None:
        return self.sigma if self.kind == "power" else None

    def derivative(self, order: int, t):
        """``v^{(order)}(t)`` for order 0..3."""
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            if order == 0:
                return 1.0 + omega(1.0 + self.sigma, t)
            return t ** (self.sigma - order) * special.rgamma(1.0 + self.sigma - order)
        c = np.polynomial.polynomial.polyder(self.coeffs, order) if order else self.coeffs
        return np.polynomial.polynomial.polyval(t, c)

    def __call__(self, t):
        return self.derivative(0, t)

    def third_scale(self) -> float:
        """Constant ``c`` with ``v'''(t) = c t^{sigma-3}`` (power) or ``v''' = c``."""
        if self.kind == "power":
            return float(special.rgamma(self.sigma - 2.0))
        return 6.0 * self.coeffs[3]

    def caputo(self, alpha: float, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return omega(1.0 + self.sigma - alpha, t)
        out = np.zeros_like(t)
        for m in range(1, 4):
            if self.coeffs[m]:
                out = out + self.coeffs[m] * math.factorial(m) * omega(m + 1.0 - alpha, t)
        return out


def truncation_error(table: KernelTable, v: ManufacturedFunction) -> np.ndarray:
    """``Upsilon^{n-theta}`` for n = 1..N."""
    mesh = table.mesh
    exact = v.caputo(table.alpha, mesh.offset_nodes)
    return exact - apply_discrete_caputo(table, v(mesh.nodes))


# -- G integrals ------------------------------------------------------------------

def _iquad(*args, **kw):
    # near-zero integrands (the quantity being measured is a small error) make
    # QUADPACK report roundoff; the value is still accurate to absolute eps
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(*args, **kw)


def _quad(f, lo, hi, **kw):
    opts = dict(epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    opts.update(kw)
    return _iquad(f, lo, hi, **opts)[0]


def _singular_cell(v: ManufacturedFunction, lo: float) -> bool:
    return v.kind == "power" and lo == 0.0


def _check_integrable(v: ManufacturedFunction) -> None:
    if v.kind == "power" and v.sigma <= 0:
        raise DomainError("v''' is not integrable against the ECS weights for sigma <= 0")


def _weighted_sq(v: ManufacturedFunction, lo: float, hi: float, anchor: float, left: bool) -> float:
    """``int_lo^hi w(s)^2 |v'''(s)| ds`` with ``w = s - anchor`` (left) or ``anchor - s``."""
    if v.kind == "poly":
        # |v'''| constant: int of a square of a linear weight
        c = abs(v.third_scale())
        d0, d1 = (lo - anchor, hi - anchor) if left else (anchor - hi, anchor - lo)
        return c * (d1**3 - d0**3) / 3.0
    c = abs(v.third_scale())
    if left and anchor == 0.0 and lo == 0.0:
        return c * hi**v.sigma / v.sigma
    if left:
        return _quad(lambda s: (s - anchor) ** 2 * abs(v.derivative(3, s)), lo, hi)
    return _quad(lambda s: (anchor - s) ** 2 * abs(v.derivative(3, s)), lo, hi)


def g_loc(mesh: TimeMesh, v: ManufacturedFunction, k: int) -> float:
    """Local ECS weight on cell ``k``."""
    _check_integrable(v)
    if not 1 <= k <= mesh.N:
        raise IndexError(f"cell k={k} outside 1..{mesh.N}")
    lo, hi = mesh.t(k - 1), mesh.t(k)
    tau = hi - lo
    mid = lo + tau / 2
    first = _weighted_sq(v, lo, mid, lo, left=True)
    if v.kind == "poly":
        second = abs(v.third_scale()) * (tau / 2) ** 2 / 2.0
    else:
        second = _quad(lambda s: (hi - s) * abs(v.derivative(3, s)), mid, hi)
    return 1.5 * first + 1.5 * tau * second


def g_his(mesh: TimeMesh, v: ManufacturedFunction, k: int) -> float:
    """History ECS weight coupling cells ``k`` and ``k+1``."""
    _check_integrable(v)
    if not 1 <= k <= mesh.N - 1:
        raise IndexError(f"g_his needs 1 <= k <= N-1, got k={k}")
    t0, t1, t2 = mesh.t(k - 1), mesh.t(k), mesh.t(k + 1)
    return 2.5 * _weighted_sq(v, t0, t1, t0, left=True) + 2.5 * _weighted_sq(v, t1, t2, t2, left=False)


def g_tables(mesh: TimeMesh, v: ManufacturedFunction) -> tuple[np.ndarray, np.ndarray]:
    """``G_loc^k`` for k = 1..N and ``G_his^k`` for k = 1..N-1."""
    gl = np.array([g_loc(mesh, v, k) for k in range(1, mesh.N + 1)])
    gh = np.array([g_his(mesh, v, k) for k in range(1, mesh.N)])
    return gl, gh


# -- per-cell splitting -------------------------------------------------------------

def local_cell_error(mesh: TimeMesh, alpha: float, v: ManufacturedFunction, n: int) -> float:
    """``int_{t_{n-1}}^{t_{n-theta}} varpi_n'(s) (v'(s) - grad v^n / tau_n) ds``."""
    lo, hi = mesh.t(n - 1), mesh.offset(n)
    tau = mesh.step(n)
    slope = (v(mesh.t(n)) - v(lo)) / tau
    mass = _w(2.0 - alpha, hi - lo)
    if _singular_cell(v, lo):
        # int_0^x omega_{1-alpha}(x - s) omega_sigma(s) ds = omega_{1+sigma-alpha}(x)
        return float(omega(1.0 + v.sigma - alpha, hi) - slope * mass)
    g = special.rgamma(1.0 - alpha)

    def f(s):
        return g * (v.derivative(1, s) - slope)

    return float(_iquad(f, lo, hi, weight="alg", wvar=(0.0, -alpha), **_QUAD_KW)[0])


def _quadratic_interpolant_slope(mesh: TimeMesh, v: ManufacturedFunction, k: int):
    t0, t1, t2 = mesh.t(k - 1), mesh.t(k), mesh.t(k + 1)
    v0, v1, v2 = v(t0), v(t1), v(t2)
    d01 = (v1 - v0) / (t1 - t0)
    d12 = (v2 - v1) / (t2 - t1)
    d012 = (d12 - d01) / (t2 - t0)
    # Newton form: p'(s) = d01 + d012 (2s - t0 - t1)
    return lambda s: d01 + d012 * (2.0 * s - t0 - t1)


def history_cell_error_direct(mesh: TimeMesh, alpha: float, v: ManufacturedFunction,
                              n: int, k: int) -> float:
    """``int_{cell k} varpi_n'(s) (v - Pi_{2,k} v)'(s) ds`` straight from its definition."""
    lo, hi = mesh.t(k - 1), mesh.t(k)
    tnt = mesh.offset(n)
    dp = _quadratic_interpolant_slope(mesh, v, k)
    g = special.rgamma(1.0 - alpha)
    if _singular_cell(v, lo):
        # split v' = omega_sigma(s) (algebraic weight) from the smooth interpolant part
        wv = _iquad(lambda s: g * (tnt - s) ** (-alpha) * special.rgamma(v.sigma),
                            lo, hi, weight="alg", wvar=(v.sigma - 1.0, 0.0), **_QUAD_KW)[0]
        wp = _iquad(lambda s: g * (tnt - s) ** (-alpha) * dp(s), lo, hi, **_QUAD_KW)[0]
        return float(wv - wp)
    f = lambda s: g * (tnt - s) ** (-alpha) * (v.derivative(1, s) - dp(s))  # noqa: E731
    return float(_iquad(f, lo, hi, **_QUAD_KW)[0])


def _series_or_direct(coeffs: np.ndarray, direct, x):
    """``sum_i coeffs[i] x^i`` for small ``x``, ``direct(x)`` otherwise."""
    x = np.asarray(x, dtype=float)
    small = x <= _K_SERIES_MAX
    out = np.empty_like(x)
    out[small] = np.polyval(coeffs[::-1], x[small])
    if np.any(~small):
        out[~small] = direct(x[~small])
    return out if out.ndim else float(out)


def _K_over_u2(alpha: float, D: float, tau: float):
    """``K(s) / u^2`` with ``u = s - t_{k-1}``, where ``K(s) = int_{t_{k-1}}^s (Err_1 varpi_n)``.

    ``D = t_{n-theta} - t_{k-1}``, ``p = 2 - alpha``, ``z = u/D``, ``r = tau/D``:
    ``K / u^2 = W3(D)/D^2 [S(z) + (p/2) T(r)]`` where
    ``S(z) = sum_{j>=3} C(p,j) (-z)^{j-2}`` and ``T(r) = sum_{j>=2} C(p-1,j) (-r)^j / r``.
    Both are summed as series below 1/2 and in closed form above.
    """
    p = 2.0 - alpha
    j = np.arange(_K_TERMS + 1)
    cs = (special.binom(p, j) * (-1.0) ** j)[3:]  # coefficient of z^(j-2), j >= 3
    cs = np.concatenate([[0.0], cs])
    ct = (special.binom(p - 1.0, j) * (-1.0) ** j)[2:]  # coefficient of r^(j-1), j >= 2
    ct = np.concatenate([[0.0], ct])

    def S_direct(z):
        return ((1.0 - z) ** p - 1.0 + p * z - 0.5 * p * (p - 1.0) * z * z) / (z * z)

    def T_direct(r):
        return ((1.0 - r) ** (p - 1.0) - 1.0 + (p - 1.0) * r) / r

    scale = _w(3.0 - alpha, D) / (D * D)
    T = _series_or_direct(ct, T_direct, tau / D)

    def K_over_u2(u):
        return scale * (_series_or_direct(cs, S_direct, u / D) + 0.5 * p * T)

    return K_over_u2


def history_cell_error(table: KernelTable, v: ManufacturedFunction, n: int, k: int) -> float:
    """Per-cell error on history cell ``k < n`` through the interpolation-error identity.

    ``(b/2) int_k (s-t_{k-1})^2 v''' - (rho_k b/2) int_{k+1} (t_{k+1}-s)^2 v'''
    + int_k v''' K``, with ``K`` the running integral of the linear
    interpolation error of ``varpi_n``.
    """
    mesh = table.mesh
    alpha = table.alpha
    t0, t1, t2 = mesh.t(k - 1), mesh.t(k), mesh.t(k + 1)
    b = table.b[n - 1, k - 1]
    rho = mesh.ratio(k)

    def signed_sq(lo, hi, anchor, left):
        if v.kind == "poly":
            c = v.third_scale()
            d0, d1 = (lo - anchor, hi - anchor) if left else (anchor - hi, anchor - lo)
            return c * (d1**3 - d0**3) / 3.0
        if left and lo == 0.0 and anchor == 0.0:
            return v.third_scale() * hi**v.sigma / v.sigma
        w = (lambda s: (s - anchor) ** 2) if left else (lambda s: (anchor - s) ** 2)
        return _iquad(lambda s: w(s) * v.derivative(3, s), lo, hi, **_QUAD_KW)[0]

    first = 0.5 * b * signed_sq(t0, t1, t0, True)
    second = 0.5 * rho * b * signed_sq(t1, t2, t2, False)
    Ku2 = _K_over_u2(alpha, mesh.offset(n) - t0, t1 - t0)
    if _singular_cell(v, t0):
        c = v.third_scale()
        third = _iquad(lambda s: c * Ku2(s), t0, t1, weight="alg",
                               wvar=(v.sigma - 1.0, 0.0), **_QUAD_KW)[0]
    else:
        third = _iquad(lambda s: v.derivative(3, s) * (s - t0) ** 2 * Ku2(s - t0),
                               t0, t1, **_QUAD_KW)[0]
    return float(first - second + third)


def cell_errors(table: KernelTable, v: ManufacturedFunction, n: int,
                method: str = "appendix") -> np.ndarray:
    """``Upsilon_k^{n-theta}`` for k = 1..n (the last entry is the local term)."""
    mesh = table.mesh
    out = np.empty(n)
    for k in range(1, n):
        if method == "appendix":
            out[k - 1] = history_cell_error(table, v, n, k)
        elif method == "direct":
            out[k - 1] = history_cell_error_direct(mesh, table.alpha, v, n, k)
        else:
            raise ValueError(f"unknown method {method!r}")
    out[n - 1] = local_cell_error(mesh, table.alpha, v, n)
    return out


# -- reports ----------------------------------------------------------------------

@dataclass
class ConsistencyReport:
    t_offset: np.ndarray
    upsilon: np.ndarray
    g_loc: np.ndarray
    g_his: np.ndarray  # length N; entry N is padded with 0
    ecs_rhs: np.ndarray
    e_glob: np.ndarray | None = None
    r_offset: np.ndarray | None = None
    local_ok: np.ndarray | None = None
    atol: float = 0.0  # roundoff floor, matters when v''' = 0

    @property
    def ecs_ok(self) -> np.ndarray:
        return np.abs(self.upsilon) <= self.ecs_rhs * (1.0 + 1e-10) + self.atol

    @property
    def ecs_violations(self) -> list[int]:
        return [int(n) for n in np.nonzero(~self.ecs_ok)[0] + 1]

    def write_csv(self, path) -> None:
        N = self.upsilon.size
        e_glob = self.e_glob if self.e_glob is not None else np.full(N, np.nan)
        r_off = self.r_offset if self.r_offset is not None else np.full(N, np.nan)
        with csv_target(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "t_offset", "upsilon", "g_loc", "g_his", "ecs_rhs", "e_glob", "r_offset"])
            for n in range(1, N + 1):
                i = n - 1
                w.writerow([n] + [repr(float(x)) for x in (self.t_offset[i], self.upsilon[i],
                                  self.g_loc[i], self.g_his[i], self.ecs_rhs[i], e_glob[i], r_off[i])])


def ecs_rhs(table: KernelTable, gl: np.ndarray, gh: np.ndarray) -> np.ndarray:
    """``A_0 G_loc^n + sum_{k<n} (A_{n-k-1} - A_{n-k}) G_his^k``."""
    return table.A0() * gl + table.kernel_diff[:, : gh.size] @ gh


def ecs_check(table: KernelTable, v: ManufacturedFunction, local_cells: bool = True) -> ConsistencyReport:
    """Evaluate the ECS bound at every ``n``; ``local_cells`` adds ``|Upsilon_n^n| <= a_0 G_loc``."""
    mesh = table.mesh
    ups = truncation_error(table, v)
    gl, gh = g_tables(mesh, v)
    rhs = ecs_rhs(table, gl, gh)
    atol = ECS_ATOL * max(1.0, float(np.abs(v.caputo(table.alpha, mesh.offset_nodes)).max()))
    local_ok = None
    if local_cells:
        a0 = np.diagonal(table.a)
        loc = np.array([local_cell_error(mesh, table.alpha, v, n) for n in range(1, mesh.N + 1)])
        local_ok = np.abs(loc) <= a0 * gl * (1.0 + 1e-10) + atol
    return ConsistencyReport(t_offset=mesh.offset_nodes.copy(), upsilon=ups, g_loc=gl,
                             g_his=np.append(gh, 0.0), ecs_rhs=rhs, local_ok=local_ok, atol=atol)


@dataclass
class GlobalConsistency:
    e_glob: np.ndarray
    majorant: np.ndarray
    remark_bound: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(self.e_glob <= self.majorant * (1.0 + 1e-10)))

    @property
    def remark_ok(self) -> bool:
        return bool(np.all(self.e_glob <= self.remark_bound * (1.0 + 1e-10)))


def global_consistency(table: KernelTable, v: ManufacturedFunction,
                       ptab: ComplementaryTable | None = None,
                       upsilon: np.ndarray | None = None) -> GlobalConsistency:
    """``E_glob^n = sum_k P_{n-k} |Upsilon^{k-theta}|`` with the ECS and P-bound majorants."""
    ptab = ptab or build_complementary(table)
    mesh = table.mesh
    ups = np.abs(truncation_error(table, v) if upsilon is None else upsilon)
    gl, gh = g_tables(mesh, v)
    A0 = table.A0()
    loc = A0 * gl
    his = np.append(A0[:-1] * gh, 0.0)
    N = mesh.N
    e = np.empty(N)
    maj = np.empty(N)
    for n in range(1, N + 1):
        P = ptab.row(n)
        e[n - 1] = P @ ups[:n]
        maj[n - 1] = P @ loc[:n] + P[: n - 1] @ his[: n - 1]
    weighted = mesh.nodes[1:] ** table.alpha * ups
    remark = ptab.pi_A * math.gamma(1.0 - table.alpha) * np.maximum.accumulate(weighted)
    return GlobalConsistency(e_glob=e, majorant=maj, remark_bound=remark)


def offset_interpolation_error(mesh: TimeMesh, v: ManufacturedFunction,
                               method: str = "exact") -> np.ndarray:
    """``v(t_{n-theta}) - theta v(t_{n-1}) - (1-theta) v(t_n)`` for n = 1..N."""
    theta = mesh.theta
    t = mesh.nodes
    if method == "exact":
        vt = v(t)
        return v(mesh.offset_nodes) - theta * vt[:-1] - (1.0 - theta) * vt[1:]
    if method != "integral":
        raise ValueError(f"unknown method {method!r}")
    out = np.empty(mesh.N)
    for n in range(1, mesh.N + 1):
        lo, mid, hi = t[n - 1], mesh.offset(n), t[n]
        if _singular_cell(v, lo):
            # v'' = c s^{sigma-2}: algebraic weight at the origin
            c = special.rgamma(v.sigma - 1.0)
            left = _iquad(lambda s: c, lo, mid, weight="alg",
                          wvar=(v.sigma - 1.0, 0.0), **_QUAD_KW)[0]
        else:
            left = _iquad(lambda s: (s - lo) * v.derivative(2, s), lo, mid, **_QUAD_KW)[0]
        right = _iquad(lambda s: (hi - s) * v.derivative(2, s), mid, hi, **_QUAD_KW)[0]
        out[n - 1] = -theta * left - (1.0 - theta) * right
    return out


def full_report(table: KernelTable, v: ManufacturedFunction) -> tuple[ConsistencyReport, GlobalConsistency]:
    rep = ecs_check(table, v)
    glob = global_consistency(table, v, upsilon=rep.upsilon)
    rep.e_glob = glob.e_glob
    rep.r_offset = offset_interpolation_error(table.mesh, v)
    return rep, glob
