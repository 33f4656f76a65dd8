"""P1 finite elements on (0, pi) with fractional Crank-Nicolson time stepping.

The problem is ``D^alpha u - u_xx = kappa u + f`` with homogeneous Dirichlet
data. Each step solves one symmetric tridiagonal system at the offset point
``t_{n-theta}``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from .complementary import ComplementaryTable
from .kernels import KernelTable, build_kernel_table
from .mesh import TimeMesh, check_conditions
from .special import log_mittag_leffler, omega

GAUSS_POINTS = 4


class NonPositivePivotError(linalg.LinAlgError):
    """The step matrix is not positive definite (step too large for kappa > 0)."""


class StepCapWarning(RuntimeWarning):
    pass


class MeshConditionWarning(RuntimeWarning):
    pass


def step_cap(alpha: float, kappa: float) -> float:
    """Largest step covered by the stability theorem; ``inf`` when ``kappa <= 0``."""
    if kappa <= 0:
        return math.inf
    return (11.0 * math.gamma(2.0 - alpha) * kappa) ** (-1.0 / alpha)


@dataclass(frozen=True)
class SubdiffusionProblem:
    """Reaction-subdiffusion data on ``(0, pi)``.

    In ``manufactured`` mode the exact solution is
    ``u = (1 + omega_{1+sigma}(t)) sin x`` and ``f`` is derived from it. In
    ``user-source`` mode ``source(x, t)`` and ``initial(x)`` must be given.
    """

    alpha: float
    kappa: float = 2.0
    T: float = 1.0
    sigma: float | None = None
    mode: str = "manufactured"
    source: Callable | None = None
    initial: Callable | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.mode == "manufactured":
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("manufactured mode needs sigma > 0")
        elif self.mode == "user-source":
            if self.source is None:
                raise ValueError("user-source mode needs a source callable")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    def time_factor(self, t):
        """``1 + omega_{1+sigma}(t)``, the amplitude of the manufactured solution."""
        return 1.0 + omega(1.0 + self.sigma, t)

    def exact(self, x, t):
        if self.mode != "manufactured":
            raise ValueError("no exact solution in user-source mode")
        return self.time_factor(t) * np.sin(x)

    def f(self, x, t):
        if self.mode == "user-source":
            return self.source(x, t)
        g = omega(1.0 + self.sigma - self.alpha, t) + (1.0 - self.kappa) * self.time_factor(t)
        return g * np.sin(x)

    def u0(self, x):
        if self.mode == "manufactured":
            return np.sin(x)
        return np.zeros_like(x) if self.initial is None else self.initial(x)


@dataclass
class SpatialGrid:
    """Uniform P1 grid with ``M`` interior nodes on ``(0, pi)``."""

    M: int
    length: float = math.pi
    h: float = field(init=False)
    x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("need M >= 2 interior nodes")
        self.h = self.length / (self.M + 1)
        self.x = self.h * np.arange(1, self.M + 1)

    @property
    def mass_bands(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of the mass matrix."""
        h = self.h
        return np.full(self.M, 4.0 * h / 6.0), np.full(self.M - 1, h / 6.0)

    @property
    def stiffness_bands(self) -> tuple[np.ndarray, np.ndarray]:
        h = self.h
        return np.full(self.M, 2.0 / h), np.full(self.M - 1, -1.0 / h)

    def quadrature(self):
        """Gauss points per element and the two local hat values at them.

        Returns ``(xq, wq, phi_left, phi_right)`` with ``xq`` of shape
        ``(M+1, GAUSS_POINTS)``; element ``e`` spans ``[x_e, x_{e+1}]``.
        """
        g, w = leggauss(GAUSS_POINTS)
        s = 0.5 * (g + 1.0)
        left = self.h * np.arange(self.M + 1)[:, None]
        xq = left + self.h * s[None, :]
        wq = 0.5 * self.h * w
        return xq, wq, 1.0 - s, s


def assemble(grid: SpatialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Dense mass and stiffness matrices (small grids, tests and inspection)."""
    md, mo = grid.mass_bands
    sd, so = grid.stiffness_bands
    mass = np.diag(md) + np.diag(mo, 1) + np.diag(mo, -1)
    stiff = np.diag(sd) + np.diag(so, 1) + np.diag(so, -1)
    return mass, stiff


def tridiag_matvec(diag: np.ndarray, off: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Symmetric tridiagonal product; ``x`` may carry trailing columns."""
    y = diag.reshape((-1,) + (1,) * (x.ndim - 1)) * x
    o = off.reshape((-1,) + (1,) * (x.ndim - 1))
    y[:-1] += o * x[1:]
    y[1:] += o * x[:-1]
    return y


def load_vector(grid: SpatialGrid, func: Callable) -> np.ndarray:
    """``int func(x) phi_i(x) dx`` for each interior hat function."""
    xq, wq, pl, pr = grid.quadrature()
    fq = np.asarray(func(xq), dtype=float) * wq[None, :]
    right_of_node = fq @ pr  # element e contributes to its right node e+1
    left_of_node = fq @ pl  # and to its left node e
    return right_of_node[:-1] + left_of_node[1:]


def l2_norm_function(grid: SpatialGrid, func: Callable) -> float:
    """Continuous ``L2(0, pi)`` norm of ``func`` by Gauss quadrature per element."""
    xq, wq, _, _ = grid.quadrature()
    fq = np.asarray(func(xq), dtype=float)
    return math.sqrt(float(np.sum(fq**2 * wq[None, :])))


def mass_norm(grid: SpatialGrid, U: np.ndarray) -> np.ndarray:
    """``sqrt(U^T Mass U)`` along the first axis."""
    md, mo = grid.mass_bands
    return np.sqrt(np.maximum(np.sum(U * tridiag_matvec(md, mo, U), axis=0), 0.0))


def ritz_projection(grid: SpatialGrid, w: Callable, dw: Callable | None = None) -> np.ndarray:
    """Nodal values of ``R_h w`` from ``S R = (int w' phi_i')``.

    With ``dw`` the load is integrated by Gauss per element; without it the
    element integral ``phi' (w(x_{e+1}) - w(x_e))`` is used, which is exact.
    """
    h = grid.h
    if dw is not None:
        xq, wq, _, _ = grid.quadrature()
        elem = np.sum(np.asarray(dw(xq), dtype=float) * wq[None, :], axis=1)
    else:
        nodes = h * np.arange(grid.M + 2)
        elem = np.diff(np.asarray(w(nodes), dtype=float))
    # phi_i' = 1/h on element i-1, -1/h on element i
    b = (elem[:-1] - elem[1:]) / h
    sd, so = grid.stiffness_bands
    ab = np.vstack([np.concatenate([[0.0], so]), sd])
    return linalg.solveh_banded(ab, b)


@dataclass
class DiscreteSolution:
    U: np.ndarray  # (N+1, M); row n holds U^n
    mesh: TimeMesh
    grid: SpatialGrid
    problem: SubdiffusionProblem
    table: KernelTable
    m1_ok: bool = True
    step_cap_ok: bool = True


def _history(table: KernelTable, dU: np.ndarray, n: int, form: str, U: np.ndarray | None = None):
    """``sum_{k<n} A_{n-k} (U^k - U^{k-1})`` or its rearranged equivalent."""
    if n == 1:
        return np.zeros(dU.shape[1])
    row = table.A[n - 1]
    if form == "differences":
        return row[: n - 1] @ dU[: n - 1]
    # sum_{k<n} A_{n-k} grad U^k = A_1 U^{n-1} - sum_{k<n-1} (A_{n-k-1} - A_{n-k}) U^k - A_{n-1} U^0
    diff = table.kernel_diff[n - 1, : n - 2]
    return row[n - 2] * U[n - 1] - diff @ U[1 : n - 1] - row[0] * U[0]


def _advance(problem: SubdiffusionProblem, grid: SpatialGrid, table: KernelTable,
             U_prev: np.ndarray, hist: np.ndarray, n: int) -> np.ndarray:
    """Solve ``[A_0 Mass + (1-theta) K] U^n = Mass (A_0 U^{n-1} - hist) - theta K U^{n-1} + F``."""
    theta = table.theta
    kappa = problem.kappa
    A0 = table.A[n - 1, n - 1]
    md, mo = grid.mass_bands
    sd, so = grid.stiffness_bands
    # K = S - kappa Mass
    kd, ko = sd - kappa * md, so - kappa * mo
    t_off = table.mesh.offset(n)
    F = load_vector(grid, lambda x: problem.f(x, t_off))
    rhs = tridiag_matvec(md, mo, A0 * U_prev - hist) - theta * tridiag_matvec(kd, ko, U_prev) + F
    ab = np.vstack([np.concatenate([[0.0], A0 * mo + (1.0 - theta) * ko]),
                    A0 * md + (1.0 - theta) * kd])
    try:
        return linalg.solveh_banded(ab, rhs, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NonPositivePivotError(
            f"step n={n}: system matrix lost positivity (tau={table.mesh.step(n):.3e}, "
            f"cap={step_cap(table.alpha, kappa):.3e})") from exc


def step(problem: SubdiffusionProblem, grid: SpatialGrid, table: KernelTable,
         U: np.ndarray, n: int, history_form: str = "differences") -> np.ndarray:
    """Advance to ``U^n`` given ``U[0..n-1]``."""
    dU = np.diff(U[:n], axis=0)
    hist = _history(table, dU, n, history_form, U)
    return _advance(problem, grid, table, U[n - 1], hist, n)


def solve(problem: SubdiffusionProblem, mesh: TimeMesh, grid: SpatialGrid,
          table: KernelTable | None = None, u0h: np.ndarray | None = None,
          enforce_step_cap: bool = False, warn: bool = True) -> DiscreteSolution:
    """Run the full trajectory ``U^0..U^N``.

    The step cap of the stability theorem is checked; by default a violation
    only warns (``enforce_step_cap=True`` raises instead). A mesh outside the
    step-ratio condition also only warns. Both outcomes are recorded on the
    solution, so ``warn=False`` loses nothing.
    """
    alpha = problem.alpha
    if table is None:
        table = build_kernel_table(mesh, alpha)
    m1_ok = check_conditions(mesh, alpha, gamma=1.0).m1_ok
    if not m1_ok and warn:
        warnings.warn("mesh violates the step-ratio condition (or theta != alpha/2)",
                      MeshConditionWarning, stacklevel=2)
    cap = step_cap(alpha, problem.kappa)
    cap_ok = mesh.max_step <= cap
    if not cap_ok:
        msg = f"max step {mesh.max_step:.3e} exceeds the stability step cap {cap:.3e}"
        if enforce_step_cap:
            raise ValueError(msg)
        if warn:
            warnings.warn(msg, StepCapWarning, stacklevel=2)
    N = mesh.N
    U = np.zeros((N + 1, grid.M))
    U[0] = ritz_projection(grid, problem.u0) if u0h is None else u0h
    dU = np.zeros((N, grid.M))
    for n in range(1, N + 1):
        hist = table.A[n - 1, : n - 1] @ dU[: n - 1] if n > 1 else np.zeros(grid.M)
        U[n] = _advance(problem, grid, table, U[n - 1], hist, n)
        dU[n - 1] = U[n] - U[n - 1]
    return DiscreteSolution(U=U, mesh=mesh, grid=grid, problem=problem, table=table,
                            m1_ok=m1_ok, step_cap_ok=cap_ok)


def l2_error(sol: DiscreteSolution) -> tuple[np.ndarray, float]:
    """``||U^n - I_h u(t_n)||`` for n = 0..N and ``e(N) = max_{n>=1}``."""
    exact = np.stack([sol.problem.exact(sol.grid.x, t) for t in sol.mesh.nodes])
    err = mass_norm(sol.grid, (sol.U - exact).T)
    return err, float(err[1:].max())


@dataclass
class StabilityBound:
    ml_log: np.ndarray  # log E_alpha(20 kappa_+ t_n^alpha)
    saturated: np.ndarray
    data_P: np.ndarray  # ||u0h|| + 2 max_k sum_j P ||f||
    data_gamma: np.ndarray  # ||u0h|| + 6 Gamma(1-alpha) max_j t_j^alpha ||f||

    @property
    def bound_P(self) -> np.ndarray:
        return _scaled(self.ml_log, self.data_P)

    @property
    def bound_gamma(self) -> np.ndarray:
        return _scaled(self.ml_log, self.data_gamma)

    def holds(self, norms: np.ndarray, slack: float = 1e-10) -> bool:
        """``norms[n-1] <= bound_P[n-1]`` for every n, in log space."""
        norms = np.asarray(norms, dtype=float)
        with np.errstate(divide="ignore"):
            log_b = math.log(2.0) + self.ml_log + np.log(self.data_P)
            log_u = np.log(norms)
        return bool(np.all(log_u <= log_b + math.log1p(slack)))


def _scaled(ml_log, data):
    # zero data bounds by zero even when the Mittag-Leffler factor overflows
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(data == 0, 0.0, 2.0 * np.exp(ml_log) * data)


def stability_bound(problem: SubdiffusionProblem, mesh: TimeMesh, ptab: ComplementaryTable,
                    f_norms: np.ndarray, u0_norm: float) -> StabilityBound:
    """Both forms of the a priori bound at every ``t_n``.

    ``f_norms[j-1] = ||f(t_{j-theta})||``. The Mittag-Leffler factor is kept in
    log form so saturated values are still comparable.
    """
    alpha = problem.alpha
    kp = max(problem.kappa, 0.0)
    t = mesh.nodes[1:]
    ml = [log_mittag_leffler(alpha, 20.0 * kp * tn**alpha) for tn in t]
    ml_log = np.array([m.log_value for m in ml])
    sat = np.array([m.saturated for m in ml])
    f_norms = np.asarray(f_norms, dtype=float)
    conv = ptab.convolve(f_norms)
    data_P = u0_norm + 2.0 * np.maximum.accumulate(conv)
    weighted = t**alpha * f_norms
    data_gamma = u0_norm + 6.0 * math.gamma(1.0 - alpha) * np.maximum.accumulate(weighted)
    return StabilityBound(ml_log=ml_log, saturated=sat, data_P=data_P, data_gamma=data_gamma)


def solution_stability(sol: DiscreteSolution, ptab: ComplementaryTable) -> tuple[StabilityBound, np.ndarray]:
    """Bound and discrete norms ``||u_h^n||`` (n = 1..N) for a finished solve."""
    prob, grid, mesh = sol.problem, sol.grid, sol.mesh
    f_norms = np.array([l2_norm_function(grid, lambda x, t=t: prob.f(x, t)) for t in mesh.offset_nodes])
    u0_norm = float(mass_norm(grid, sol.U[0]))
    bound = stability_bound(prob, mesh, ptab, f_norms, u0_norm)
    return bound, mass_norm(grid, sol.U[1:].T)
