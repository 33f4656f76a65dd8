"""Numerical certificates for the kernel inequalities on a concrete mesh.

Every check compares two sides entrywise and records the normalised margin
``(lhs - rhs) / max(|lhs|, |rhs|, 1e-300)``. A check passes when its worst
margin is at least ``-MARGIN_TOL``; equalities use ``-|lhs - rhs|`` scaled the
same way and the tighter ``IDENTITY_TOL``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._io import csv_target
from .complementary import PI_A, ComplementaryTable, build_complementary
from .kernels import KernelTable, _w, apply_discrete_caputo, ratio_a
from .mesh import TimeMesh, check_conditions
from .special import omega

MARGIN_TOL = 1e-10
IDENTITY_TOL = 1e-12


@dataclass
class Check:
    name: str
    n: np.ndarray
    k: np.ndarray
    margin: np.ndarray
    tol: float = MARGIN_TOL
    in_hypothesis: bool = True

    @property
    def worst(self) -> int:
        return int(np.argmin(self.margin)) if self.margin.size else -1

    @property
    def worst_margin(self) -> float:
        return float(self.margin.min()) if self.margin.size else 0.0

    @property
    def worst_index(self) -> tuple[int, int] | None:
        i = self.worst
        return None if i < 0 else (int(self.n[i]), int(self.k[i]))

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol

    @property
    def status(self) -> str:
        if self.passed:
            return "pass"
        return "fail" if self.in_hypothesis else "outside-hypothesis"


@dataclass
class AuditCertificate:
    mesh_fingerprint: str
    alpha: float
    in_hypothesis: bool
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        """Checks that fail inside the theorem hypotheses."""
        return [c for c in self.checks if c.status == "fail"]

    def by_name(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> list[tuple[str, str, float, tuple[int, int] | None]]:
        return [(c.name, c.status, c.worst_margin, c.worst_index) for c in self.checks]

    def csv_rows(self):
        """Worst margin per check and row ``n``."""
        for c in self.checks:
            if not c.margin.size:
                continue
            order = np.lexsort((c.margin, c.n))
            seen = set()
            for i in order:
                n = int(c.n[i])
                if n in seen:
                    continue
                seen.add(n)
                ok = c.margin[i] >= -c.tol
                status = "pass" if ok else ("fail" if c.in_hypothesis else "outside-hypothesis")
                yield [c.name, n, int(c.k[i]), repr(float(c.margin[i])), status]


def write_audit_csv(certs, path) -> None:
    with csv_target(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "n", "k", "margin", "pass"])
        for cert in certs:
            for row in cert.csv_rows():
                w.writerow(row)


def margins(lhs, rhs) -> np.ndarray:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    return (lhs - rhs) / scale


def identity_margins(lhs, rhs, scale=None) -> np.ndarray:
    """``-|lhs - rhs|`` relative to ``scale`` (defaults to the larger side).

    A difference identity should pass ``scale`` = the size of the operands
    being subtracted, since that is where the roundoff lives.
    """
    if scale is None:
        return -np.abs(margins(lhs, rhs))
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = np.maximum(np.asarray(scale, dtype=float), np.maximum(np.abs(lhs), np.abs(rhs)))
    return -np.abs(lhs - rhs) / np.maximum(scale, 1e-300)


def _entries(mask: np.ndarray):
    n_idx, k_idx = np.nonzero(mask)
    return n_idx + 1, k_idx + 1


def _check(name, mask, lhs, rhs, identity=False, scale=None):
    n, k = _entries(mask)
    if identity:
        m = identity_margins(lhs[mask], rhs[mask], None if scale is None else scale[mask])
    else:
        m = margins(lhs[mask], rhs[mask])
    return Check(name, n, k, m, tol=IDENTITY_TOL if identity else MARGIN_TOL)


def l1_cell_averages(mesh: TimeMesh, alpha: float) -> np.ndarray:
    """``L[n-1, k-1] = (1/tau_k) int_{cell k} omega_{1-alpha}(t_n - s) ds`` for k <= n."""
    N = mesh.N
    out = np.zeros((N, N))
    t, tau = mesh.nodes, mesh.tau
    for n in range(1, N + 1):
        x = t[n] - t[1:n]
        out[n - 1, : n - 1] = _w(1.0 - alpha, x) * ratio_a(alpha, tau[: n - 1] / x)
        out[n - 1, n - 1] = _w(2.0 - alpha, tau[n - 1]) / tau[n - 1]
    return out


class _Context:
    """Shared index masks and derived arrays for one kernel table."""

    def __init__(self, table: KernelTable):
        self.table = table
        mesh = table.mesh
        N = mesh.N
        self.N = N
        nn = np.arange(1, N + 1)[:, None]
        kk = np.arange(1, N + 1)[None, :]
        self.nn, self.kk = nn, kk
        self.full = kk <= nn
        self.hist = kk <= nn - 1
        self.theta = mesh.theta
        self.alpha = table.alpha
        self.rho = np.zeros((1, N))
        self.rho[0, : N - 1] = mesh.rho  # rho_k at column k-1
        self.tau = mesh.tau[None, :]
        # varpi_n'(t_j) = omega_{1-alpha}(t_{n-theta} - t_j), column j-1 holds j = 1..N
        dist = mesh.offset_nodes[:, None] - mesh.nodes[None, 1:]
        with np.errstate(invalid="ignore", divide="ignore"):
            self.dvarpi_right = np.where(self.hist, _w(1.0 - table.alpha, np.where(self.hist, dist, 1.0)), 0.0)
        dist_left = mesh.offset_nodes[:, None] - mesh.nodes[None, :-1]
        self.dvarpi_left = np.where(self.full, _w(1.0 - table.alpha, np.where(self.full, dist_left, 1.0)), 0.0)
        self.dist_right = np.where(self.hist, dist, 1.0)
        self._l1 = None

    @property
    def l1(self):
        if self._l1 is None:
            self._l1 = l1_cell_averages(self.table.mesh, self.alpha)
        return self._l1


def _shift_left(X):
    """Column k-1 receives column k (entry for cell k+1)."""
    out = np.zeros_like(X)
    out[:, :-1] = X[:, 1:]
    return out


def _shift_right(X):
    """Column k-1 receives column k-2 (entry for cell k-1)."""
    out = np.zeros_like(X)
    out[:, 1:] = X[:, :-1]
    return out


# -- Theorem A1-A2 and criteria ---------------------------------------------------

def audit_A1(table: KernelTable, ctx: _Context | None = None) -> Check:
    """``A^{(n)}_{n-k} >= (1/pi_A) * cell average of omega_{1-alpha}(t_n - .)``."""
    ctx = ctx or _Context(table)
    return _check("A1", ctx.full, table.A, ctx.l1 / PI_A)


def audit_bounded(table: KernelTable, ctx: _Context | None = None) -> list[Check]:
    ctx = ctx or _Context(table)
    diag = np.eye(ctx.N, dtype=bool)
    upper = _check("thm_I_upper", diag, 24.0 / 11.0 * ctx.l1, table.A)
    lower = _check("thm_I_lower", ctx.full, table.A, 4.0 / 11.0 * ctx.l1)
    return [upper, lower]


def audit_monotone(table: KernelTable, ctx: _Context | None = None) -> Check:
    """``A_{n-k-1} - A_{n-k} >= (1 + rho_k) b_{n-k} + I_{n-k} / 5``."""
    ctx = ctx or _Context(table)
    rhs = (1.0 + ctx.rho) * table.b + table.I / 5.0
    return _check("thm_II_monotone", ctx.hist, table.kernel_diff, rhs)


def audit_first_vs_second(table: KernelTable, ctx: _Context | None = None) -> list[Check]:
    ctx = ctx or _Context(table)
    theta = table.theta
    A0 = table.A0()
    A1 = np.array([table.A[n - 1, n - 2] for n in range(2, table.N + 1)])
    ns = np.arange(2, table.N + 1)
    lhs = (1.0 - 2.0 * theta) / (1.0 - theta) * A0[1:]
    third = Check("thm_III", ns, ns - 1, margins(lhs, A1))
    # theta^{(1)} = 1/2 and theta^{(n)} = (A0 - A1) / (2 A0 - A1)
    theta_n = np.concatenate([[0.5], (A0[1:] - A1) / (2.0 * A0[1:] - A1)])
    all_n = np.arange(1, table.N + 1)
    cor = Check("theta_n_ge_theta", all_n, all_n, margins(theta_n, np.full_like(theta_n, theta)))
    return [third, cor]


def audit_quadratic_form(table: KernelTable, trials: int = 1000, seed: int = 0) -> Check:
    """``(Dv)^{n-theta} v^{n-theta} >= 1/2 sum_k A_{n-k} grad (v^k)^2`` for random ``v``."""
    rng = np.random.default_rng(seed)
    theta = table.theta
    V = rng.standard_normal((table.N + 1, trials))
    Dv = apply_discrete_caputo(table, V)
    v_off = theta * V[:-1] + (1.0 - theta) * V[1:]
    lhs = Dv * v_off
    rhs = 0.5 * apply_discrete_caputo(table, V**2)
    N = table.N
    ns = np.repeat(np.arange(1, N + 1), trials)
    trial = np.tile(np.arange(1, trials + 1), N)
    return Check("cor_quadratic_form", ns, trial, margins(lhs, rhs).ravel())


# -- auxiliary lemmas ------------------------------------------------------------

def audit_lemma_a(table: KernelTable, ctx: _Context | None = None) -> list[Check]:
    """``a_{n-k} > varpi'(t_{k-1}) > a_{n-k+1}`` and the cell-average lower bounds."""
    ctx = ctx or _Context(table)
    a = table.a
    w = ctx.dvarpi_left  # column k-1: varpi_n'(t_{k-1})
    left = _check("lem_a_i_left", ctx.full, a, w)
    mask_r = ctx.full & (ctx.kk >= 2)
    right = _check("lem_a_i_right", mask_r, w, _shift_right(a))
    diag = np.eye(ctx.N, dtype=bool)
    ii_0 = _check("lem_a_ii_a0", diag, a, 0.75 * ctx.l1)
    ii_h = _check("lem_a_ii_hist", ctx.hist, a, ctx.l1)
    return [left, right, ii_0, ii_h]


def audit_lemma_b(table: KernelTable, ctx: _Context | None = None) -> list[Check]:
    """Upper bounds on ``b`` through ``int varpi''`` and through ``a``."""
    ctx = ctx or _Context(table)
    b, rho = table.b, ctx.rho
    pos = _check("lem_b_positive", ctx.hist, b, np.zeros_like(b))
    integral = table.I + table.J
    upper = _check("lem_b_upper", ctx.hist, rho / (4.0 * (1.0 + rho)) * integral, b)
    factor = ctx.theta * ctx.tau / (2.0 * ctx.dist_right) * rho / (1.0 + rho)
    vs_a = _check("lem_b_vs_a", ctx.hist, factor * table.a, b)
    return [pos, upper, vs_a]


def audit_bridges(table: KernelTable, ctx: _Context | None = None) -> list[Check]:
    """Bounds of ``I``/``J`` against ``b``, ``J >= I`` and the cell-to-cell ratios."""
    ctx = ctx or _Context(table)
    b, I, J, rho = table.b, table.I, table.J, ctx.rho
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = np.where(ctx.hist, (1.0 + rho) / np.where(ctx.hist, rho, 1.0), 0.0)
    out = [
        _check("lem_IJ_i", ctx.hist, I, c1 * b),
        _check("lem_IJ_ii", ctx.hist, J, 2.0 * c1 * b),
        _check("lem_IJ_iii", ctx.hist, J, I),
    ]
    # I_{n-k-1} >= I_{n-k} / rho_k, 1 <= k <= n-2
    mask = ctx.kk <= ctx.nn - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(mask, 1.0 / np.where(mask, rho, 1.0), 0.0)
    out.append(_check("lem_ratio_I", mask, _shift_left(I), inv * I))
    out.append(_check("lem_ratio_J", mask, _shift_left(J), inv * J))
    return out


def audit_a_differences(table: KernelTable, ctx: _Context | None = None) -> list[Check]:
    """Identity for ``a_{n-k-1} - a_{n-k}`` and its lower bounds."""
    ctx = ctx or _Context(table)
    a, b, I, J, rho = table.a, table.b, table.I, table.J, ctx.rho
    theta = ctx.theta
    diff = _shift_left(a) - a  # column k-1: a_{n-k-1} - a_{n-k}
    inner = ctx.kk <= ctx.nn - 2
    last = ctx.kk == ctx.nn - 1
    ident_inner = _shift_left(I) + J
    ident_last = theta / (1.0 - 2.0 * theta) * ctx.dvarpi_right + J
    operands = np.maximum(_shift_left(a), a)
    out = [
        _check("lem_adiff_identity", inner, diff, ident_inner, identity=True, scale=operands),
        _check("lem_adiff_identity_last", last, diff, ident_last, identity=True, scale=operands),
    ]
    b_next = _shift_left(b)  # b_{n-k-1}
    b_prev = _shift_right(b)  # b_{n-k+1}
    rho_prev = _shift_right(rho)
    # column 0 (k = 1) has I at column 0 = I_{n-1}
    rhs_inner = np.where(ctx.kk == 1, b_next + 1.2 * I, b_next + rho_prev * b_prev + I / 5.0)
    out.append(_check("lem_adiff_bound", inner, diff, rhs_inner))
    rhs_last = np.where(ctx.nn == 2, I, rho_prev * b_prev + I)
    out.append(_check("lem_adiff_bound_last", last, diff, rhs_last))
    return out


def audit_p_bound(table: KernelTable, ptab: ComplementaryTable | None = None) -> list[Check]:
    ptab = ptab or build_complementary(table, check=False)
    out = []
    t = table.mesh.nodes
    for m in (0, 1):
        weights = omega(1.0 + (m - 1) * table.alpha, t[1:])
        ns = np.arange(1, table.N + 1)
        lhs = np.array([ptab.row(n) @ weights[:n] for n in ns])
        rhs = ptab.pi_A * omega(1.0 + m * table.alpha, t[1:])
        out.append(Check(f"p_bound_m{m}", ns, ns, margins(rhs, lhs)))
    return out


def audit_table(table: KernelTable, trials: int = 200, seed: int = 0,
                quadratic_form: bool = True) -> AuditCertificate:
    """Run every kernel check on one table."""
    mesh = table.mesh
    report = check_conditions(mesh, table.alpha, gamma=1.0)
    ctx = _Context(table)
    checks: list[Check] = [audit_A1(table, ctx)]
    checks += audit_bounded(table, ctx)
    checks.append(audit_monotone(table, ctx))
    checks += audit_first_vs_second(table, ctx)
    checks += audit_lemma_a(table, ctx)
    checks += audit_lemma_b(table, ctx)
    checks += audit_bridges(table, ctx)
    checks += audit_a_differences(table, ctx)
    checks += audit_p_bound(table)
    if quadratic_form:
        checks.append(audit_quadratic_form(table, trials=trials, seed=seed))
    for c in checks:
        c.in_hypothesis = report.m1_ok
    return AuditCertificate(mesh.fingerprint(), table.alpha, report.m1_ok, checks)
