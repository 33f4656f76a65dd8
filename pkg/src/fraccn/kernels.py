"""Nonuniform Alikhanov (L2-1sigma) coefficients and discrete convolution kernels.

Row ``n`` of every table approximates the Caputo derivative at ``t_{n-theta}``.
Arrays are stored dense lower-triangular with ``X[n-1, k-1]`` holding the
entry for cell ``k`` of row ``n`` (the usual subscript is ``n-k``).

The closed forms are differences of power kernels evaluated at
``x = t_{n-theta} - t_k`` and ``x + tau_k``. They are written as
``omega(x) * F(r)`` with ``r = tau_k / x`` so that the cancellation hidden in
``F`` can be removed with a binomial series when ``r`` is small.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate, special

from ._io import csv_target
from .mesh import TimeMesh

# r below this uses the series form of each closed form
SERIES_MAX_RATIO = 0.5
_SERIES_MAX_TERMS = 64
QUAD_RTOL = 1e-13


class KernelIndexError(IndexError):
    pass


def _binom(p: float, K: int) -> np.ndarray:
    """Generalised binomial coefficients ``C(p, j)`` for ``j = 0..K``."""
    c = np.empty(K + 1)
    c[0] = 1.0
    for j in range(1, K + 1):
        c[j] = c[j - 1] * (p - j + 1) / j
    return c


def _series_terms(r: np.ndarray, lead: int) -> int:
    rmax = float(r.max())
    if rmax <= 0:
        return lead + 1
    return min(_SERIES_MAX_TERMS, lead + math.ceil(-17 * math.log(10) / math.log(rmax)) + 2)


def _split_eval(r, direct, series_coeffs, lead):
    """Evaluate ``direct(r)`` for large ``r`` and a power series for small ``r``."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = r <= SERIES_MAX_RATIO
    if np.any(~small):
        out[~small] = direct(r[~small])
    if np.any(small):
        K = _series_terms(r[small], lead)
        out[small] = P.polyval(r[small], series_coeffs(K))
    return out


def _expm1_pow(q: float, r):
    """``(1 + r)**q - 1`` without cancellation."""
    return np.expm1(q * np.log1p(r))


def ratio_a(alpha: float, r):
    """``((1 + r)^(1-alpha) - 1) / ((1-alpha) r)``; the history ``a`` is ``omega_{1-alpha}(x)`` times this."""
    q = 1.0 - alpha
    r = np.asarray(r, dtype=float)
    return _expm1_pow(q, r) / (q * r)


def ratio_b(alpha: float, r):
    """Trapezoid defect of ``(1+r)^(2-alpha)``; the ``b`` integral is ``omega_{3-alpha}(x)`` times this."""
    p = 2.0 - alpha

    def direct(r):
        return _expm1_pow(p, r) - 0.5 * p * r * (np.power(1.0 + r, p - 1.0) + 1.0)

    def coeffs(K):
        j = np.arange(K + 1)
        cm1 = np.concatenate([[0.0], _binom(p - 1.0, K - 1)])  # C(p-1, j-1)
        c = -p * cm1 * (j - 2) / (2.0 * np.maximum(j, 1))
        c[:3] = 0.0
        return c

    return _split_eval(r, direct, coeffs, lead=3)


def ratio_J(alpha: float, r):
    """``1 - ratio_a``; ``J`` is ``omega_{1-alpha}(x)`` times this."""
    q = 1.0 - alpha

    def direct(r):
        return 1.0 - _expm1_pow(q, r) / (q * r)

    def coeffs(K):
        c = np.zeros(K + 1)
        c[1:] = -_binom(q, K + 1)[2:] / q
        return c

    return _split_eval(r, direct, coeffs, lead=1)


def ratio_I(alpha: float, r):
    """``ratio_a - (1 + r)^-alpha``; ``I`` is ``omega_{1-alpha}(x)`` times this."""
    q = 1.0 - alpha

    def direct(r):
        return _expm1_pow(q, r) / (q * r) - np.power(1.0 + r, -alpha)

    def coeffs(K):
        c = np.zeros(K + 1)
        c[1:] = _binom(q, K + 1)[2:] / q - _binom(-alpha, K)[1:]
        return c

    return _split_eval(r, direct, coeffs, lead=1)


def _w(beta: float, x):
    return np.power(x, beta - 1.0) * special.rgamma(beta)


@dataclass
class _RowGeometry:
    """Distances from ``t_{n-theta}`` for the history cells of row ``n``."""

    n: int
    x: np.ndarray  # t_{n-theta} - t_k, k = 1..n-1
    tau: np.ndarray  # tau_k, k = 1..n-1
    r: np.ndarray
    tau_next: np.ndarray  # tau_{k+1}
    d_last: float  # t_{n-theta} - t_{n-1}
    tau_n: float


def _geometry(mesh: TimeMesh, n: int) -> _RowGeometry:
    if not 1 <= n <= mesh.N:
        raise KernelIndexError(f"row n={n} outside 1..{mesh.N}")
    tnt = mesh.offset(n)
    x = tnt - mesh.nodes[1:n]
    tau = mesh.tau[: n - 1]
    return _RowGeometry(n=n, x=x, tau=tau, r=tau / x, tau_next=mesh.tau[1:n],
                        d_last=tnt - mesh.nodes[n - 1], tau_n=float(mesh.tau[n - 1]))


# -- closed forms, vectorised over the cells of one row -----------------------

def _row_a(g: _RowGeometry, alpha: float) -> np.ndarray:
    a = np.empty(g.n)
    a[:-1] = _w(1.0 - alpha, g.x) * ratio_a(alpha, g.r)
    a[-1] = _w(2.0 - alpha, g.d_last) / g.tau_n
    return a


def _row_b(g: _RowGeometry, alpha: float) -> np.ndarray:
    return 2.0 * _w(3.0 - alpha, g.x) * ratio_b(alpha, g.r) / (g.tau * (g.tau + g.tau_next))


def _row_IJ(g: _RowGeometry, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    w1 = _w(1.0 - alpha, g.x)
    return w1 * ratio_I(alpha, g.r), w1 * ratio_J(alpha, g.r)


# -- quadrature of the defining integrals ---------------------------------------

def _quad(f, lo, hi, **kw):
    val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=QUAD_RTOL, limit=200, **kw)
    return val


def _dvarpi(alpha, tnt):
    g = special.rgamma(1.0 - alpha)
    return lambda s: (tnt - s) ** (-alpha) * g


def _d2varpi(alpha, tnt):
    g = alpha * special.rgamma(1.0 - alpha)
    return lambda s: (tnt - s) ** (-alpha - 1.0) * g


def _quad_a(mesh, alpha, n, k):
    tnt = mesh.offset(n)
    lo = mesh.t(k - 1)
    if k == n:
        # (t_{n-theta} - s)^-alpha goes into the algebraic weight
        val = _quad(lambda s: 1.0, lo, tnt, weight="alg", wvar=(0.0, -alpha))
        return val * special.rgamma(1.0 - alpha) / mesh.step(n)
    return _quad(_dvarpi(alpha, tnt), lo, mesh.t(k)) / mesh.step(k)


def _quad_b(mesh, alpha, n, k, form="positive"):
    tnt = mesh.offset(n)
    lo, hi = mesh.t(k - 1), mesh.t(k)
    tk, tk1 = mesh.step(k), mesh.step(k + 1)
    if form == "definition":
        mid = 0.5 * (lo + hi)
        f = _dvarpi(alpha, tnt)
        return 2.0 * _quad(lambda s: (s - mid) * f(s), lo, hi) / (tk * (tk + tk1))
    f = _d2varpi(alpha, tnt)
    return _quad(lambda s: (hi - s) * (s - lo) * f(s), lo, hi) / (tk * (tk + tk1))


def _quad_IJ(mesh, alpha, n, k):
    tnt = mesh.offset(n)
    lo, hi = mesh.t(k - 1), mesh.t(k)
    tk = mesh.step(k)
    f = _d2varpi(alpha, tnt)
    I = _quad(lambda s: (hi - s) * f(s), lo, hi) / tk
    J = _quad(lambda s: (s - lo) * f(s), lo, hi) / tk
    return I, J


# -- public per-entry API --------------------------------------------------------

def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")


def _check_cell(mesh, n, k, history):
    if not 1 <= n <= mesh.N:
        raise KernelIndexError(f"row n={n} outside 1..{mesh.N}")
    top = n - 1 if history else n
    if not 1 <= k <= top:
        raise KernelIndexError(f"cell k={k} outside 1..{top} for row n={n}")


def a_coeff(mesh: TimeMesh, alpha: float, n: int, k: int, method: str = "closed") -> float:
    """Coefficient ``a^{(n)}_{n-k}``: average of ``varpi_n'`` over cell ``k`` (cut at ``t_{n-theta}``)."""
    _check_alpha(alpha)
    _check_cell(mesh, n, k, history=False)
    if method == "quadrature":
        return _quad_a(mesh, alpha, n, k)
    return float(_row_a(_geometry(mesh, n), alpha)[k - 1])


def b_coeff(mesh: TimeMesh, alpha: float, n: int, k: int, method: str = "closed",
            form: str = "positive") -> float:
    """Coefficient ``b^{(n)}_{n-k}`` of the quadratic correction on history cell ``k``."""
    _check_alpha(alpha)
    _check_cell(mesh, n, k, history=True)
    if method == "quadrature":
        return _quad_b(mesh, alpha, n, k, form)
    return float(_row_b(_geometry(mesh, n), alpha)[k - 1])


@dataclass(frozen=True)
class KernelRow:
    n: int
    a: np.ndarray  # k = 1..n
    b: np.ndarray  # k = 1..n-1
    A: np.ndarray  # k = 1..n


@dataclass(frozen=True)
class BridgeIntegrals:
    n: int
    I: np.ndarray  # k = 1..n-1
    J: np.ndarray


def assemble_row(a: np.ndarray, b: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Kernels ``A^{(n)}_{n-k}``, k = 1..n, from ``a``, ``b`` and ``rho_1..rho_{n-1}``."""
    A = np.array(a, dtype=float)
    if A.size > 1:
        A[:-1] -= b
        A[1:] += rho * b
    return A


def _row_values(mesh, alpha, n, method, b_form="positive"):
    if method == "closed":
        g = _geometry(mesh, n)
        a, b = _row_a(g, alpha), _row_b(g, alpha)
        I, J = _row_IJ(g, alpha)
    elif method == "quadrature":
        a = np.array([_quad_a(mesh, alpha, n, k) for k in range(1, n + 1)])
        b = np.array([_quad_b(mesh, alpha, n, k, b_form) for k in range(1, n)])
        IJ = np.array([_quad_IJ(mesh, alpha, n, k) for k in range(1, n)]).reshape(-1, 2)
        I, J = IJ[:, 0], IJ[:, 1]
    else:
        raise ValueError(f"unknown method {method!r}")
    return a, b, I, J


def kernel_row(mesh: TimeMesh, alpha: float, n: int, method: str = "closed") -> KernelRow:
    _check_alpha(alpha)
    a, b, _, _ = _row_values(mesh, alpha, n, method)
    return KernelRow(n=n, a=a, b=b, A=assemble_row(a, b, mesh.rho[: n - 1]))


def bridge_integrals(mesh: TimeMesh, alpha: float, n: int, method: str = "closed") -> BridgeIntegrals:
    """Weighted integrals of ``varpi_n''`` over the history cells of row ``n``."""
    _check_alpha(alpha)
    if n < 2:
        raise KernelIndexError("bridge integrals need n >= 2")
    _, _, I, J = _row_values(mesh, alpha, n, method)
    return BridgeIntegrals(n=n, I=I, J=J)


@dataclass
class KernelTable:
    """All rows ``n = 1..N`` of the Alikhanov kernels on one mesh."""

    mesh: TimeMesh
    alpha: float
    a: np.ndarray
    b: np.ndarray
    A: np.ndarray
    I: np.ndarray
    J: np.ndarray
    method: str = "closed"
    _diff: np.ndarray | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.mesh.N

    @property
    def theta(self) -> float:
        return self.mesh.theta

    def row(self, n: int) -> KernelRow:
        return KernelRow(n=n, a=self.a[n - 1, :n], b=self.b[n - 1, : n - 1], A=self.A[n - 1, :n])

    def bridges(self, n: int) -> BridgeIntegrals:
        return BridgeIntegrals(n=n, I=self.I[n - 1, : n - 1], J=self.J[n - 1, : n - 1])

    def A0(self) -> np.ndarray:
        """``A^{(n)}_0`` for n = 1..N."""
        return np.diagonal(self.A).copy()

    @property
    def kernel_diff(self) -> np.ndarray:
        """``D[n-1, k-1] = A^{(n)}_{n-k-1} - A^{(n)}_{n-k}`` for ``1 <= k <= n-1``."""
        if self._diff is None:
            D = np.zeros_like(self.A)
            D[:, :-1] = self.A[:, 1:] - self.A[:, :-1]
            self._diff = np.tril(D, -1)
        return self._diff

    def write_row_csv(self, n: int, path) -> None:
        row = self.row(n)
        with csv_target(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "k", "a", "b", "A"])
            for k in range(1, n + 1):
                b = repr(float(row.b[k - 1])) if k < n else ""
                w.writerow([n, k, repr(float(row.a[k - 1])), b, repr(float(row.A[k - 1]))])


def build_kernel_table(mesh: TimeMesh, alpha: float, method: str = "closed") -> KernelTable:
    _check_alpha(alpha)
    N = mesh.N
    a, b, A, I, J = (np.zeros((N, N)) for _ in range(5))
    for n in range(1, N + 1):
        an, bn, In, Jn = _row_values(mesh, alpha, n, method)
        a[n - 1, :n] = an
        b[n - 1, : n - 1] = bn
        I[n - 1, : n - 1] = In
        J[n - 1, : n - 1] = Jn
        A[n - 1, :n] = assemble_row(an, bn, mesh.rho[: n - 1])
    return KernelTable(mesh=mesh, alpha=alpha, a=a, b=b, A=A, I=I, J=J, method=method)


def apply_discrete_caputo(table: KernelTable, v, form: str = "differences") -> np.ndarray:
    """Discrete Caputo derivative ``(D v)^{n-theta}`` for n = 1..N.

    ``v`` holds ``v^0..v^N`` along its first axis (extra axes are carried
    along, e.g. nodal vectors). ``form="rearranged"`` evaluates
    ``A_0 v^n - sum (A_{n-k-1} - A_{n-k}) v^k - A_{n-1} v^0`` instead.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != table.N + 1:
        raise ValueError(f"need {table.N + 1} values, got {v.shape[0]}")
    if form == "differences":
        return table.A @ np.diff(v, axis=0)
    if form == "rearranged":
        A0 = table.A0().reshape((-1,) + (1,) * (v.ndim - 1))
        first = table.A[:, 0].reshape(A0.shape)
        return A0 * v[1:] - table.kernel_diff @ v[1:] - first * v[0]
    raise ValueError(f"unknown form {form!r}")
