"""Complementary discrete convolution kernels ``P^{(n)}_{n-j}``.

They are defined by ``sum_{j=k}^n P^{(n)}_{n-j} A^{(j)}_{j-k} = 1`` and are
computed from the backward recursion that this identity implies, one final
index ``n`` at a time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._io import csv_target
from .kernels import KernelTable
from .special import omega

PI_A = 11.0 / 4.0


class MonotonicityError(ValueError):
    """Kernel rows are not monotone, so the complementary kernels may go negative."""


def check_monotone(table: KernelTable) -> tuple[bool, tuple[int, int] | None]:
    """Check ``A^{(n)}_{k-2} >= A^{(n)}_{k-1} > 0``; returns the first offending ``(n, k)``."""
    D = table.kernel_diff
    for n in range(1, table.N + 1):
        if np.any(table.A[n - 1, :n] <= 0):
            k = int(np.argmax(table.A[n - 1, :n] <= 0)) + 1
            return False, (n, k)
        bad = np.nonzero(D[n - 1, : n - 1] < 0)[0]
        if bad.size:
            return False, (n, int(bad[0]) + 1)
    return True, None


@dataclass
class ComplementaryTable:
    """Lazily built rows ``P^{(n)}_{n-j}``, stored by cell index ``j = 1..n``."""

    table: KernelTable
    pi_A: float = PI_A
    _rows: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return self.table.N

    def row(self, n: int) -> np.ndarray:
        """``P[j-1] = P^{(n)}_{n-j}`` for j = 1..n."""
        if not 1 <= n <= self.N:
            raise IndexError(f"row n={n} outside 1..{self.N}")
        if n not in self._rows:
            self._rows[n] = _recursion_row(self.table, n)
        return self._rows[n]

    def rows(self):
        return [self.row(n) for n in range(1, self.N + 1)]

    def dense(self) -> np.ndarray:
        """Lower-triangular array with ``[n-1, j-1] = P^{(n)}_{n-j}``."""
        out = np.zeros((self.N, self.N))
        for n in range(1, self.N + 1):
            out[n - 1, :n] = self.row(n)
        return out

    def convolve(self, xi, n: int | None = None):
        """``sum_j P^{(n)}_{n-j} xi^j`` for one ``n`` or for all n = 1..N."""
        xi = np.asarray(xi, dtype=float)
        if n is not None:
            return float(self.row(n) @ xi[:n])
        return np.array([self.row(m) @ xi[:m] for m in range(1, self.N + 1)])

    def write_csv(self, path, ns=None) -> None:
        ns = range(1, self.N + 1) if ns is None else ns
        with csv_target(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "j", "P"])
            for n in ns:
                for j, p in enumerate(self.row(n), start=1):
                    w.writerow([n, j, repr(float(p))])


def _recursion_row(table: KernelTable, n: int) -> np.ndarray:
    A0 = np.diagonal(table.A)
    D = table.kernel_diff
    P = np.zeros(n)
    P[n - 1] = 1.0 / A0[n - 1]
    # P^{(n)}_{n-j} = (1/A_0^{(j)}) sum_{k=j+1}^n (A^{(k)}_{k-j-1} - A^{(k)}_{k-j}) P^{(n)}_{n-k}
    for j in range(n - 1, 0, -1):
        P[j - 1] = D[j:n, j - 1] @ P[j:n] / A0[j - 1]
    return P


def build_complementary(table: KernelTable, check: bool = True) -> ComplementaryTable:
    """Complementary kernels of a kernel table; rows are computed on demand."""
    if check:
        ok, where = check_monotone(table)
        if not ok:
            n, k = where
            raise MonotonicityError(f"kernel row n={n} is not monotone at k={k}")
    return ComplementaryTable(table)


def identity_residual(ptab: ComplementaryTable, n: int) -> np.ndarray:
    """``sum_{j=k}^n P^{(n)}_{n-j} A^{(j)}_{j-k} - 1`` for k = 1..n."""
    P = ptab.row(n)
    A = ptab.table.A[:n, :n]
    return P @ A - 1.0


def discrete_fractional_integral(table: KernelTable, xi) -> np.ndarray:
    """Solve ``sum_k A^{(n)}_{n-k} (y^k - y^{k-1}) = xi^n`` with ``y^0 = 0``.

    By the complementary identity ``y^n = sum_j P^{(n)}_{n-j} xi^j``; this
    forward solve is an independent O(N^2) route to the same convolution.
    """
    xi = np.asarray(xi, dtype=float)
    N = table.N
    dy = np.zeros(N)
    for n in range(1, N + 1):
        hist = table.A[n - 1, : n - 1] @ dy[: n - 1]
        dy[n - 1] = (xi[n - 1] - hist) / table.A[n - 1, n - 1]
    return np.cumsum(dy)


@dataclass(frozen=True)
class PBoundReport:
    m: int
    max_ratio: float  # max_n LHS / RHS
    worst_n: int
    effective_pi_A: float  # smallest constant that would still bound every row
    violations: list  # n values with LHS > RHS (1 + slack)

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_p_bound(ptab: ComplementaryTable, alpha: float, m: int, slack: float = 1e-10,
                   ns=None) -> PBoundReport:
    """Check ``sum_j P^{(n)}_{n-j} omega_{1+(m-1)alpha}(t_j) <= pi_A omega_{1+m alpha}(t_n)``."""
    mesh = ptab.table.mesh
    t = mesh.nodes
    weights = omega(1.0 + (m - 1) * alpha, t[1:])
    ns = list(range(1, ptab.N + 1)) if ns is None else list(ns)
    ratios = []
    violations = []
    for n in ns:
        lhs = ptab.row(n) @ weights[:n]
        rhs = ptab.pi_A * omega(1.0 + m * alpha, t[n])
        ratios.append(lhs / rhs)
        if lhs > rhs * (1 + slack):
            violations.append(n)
    i = int(np.argmax(ratios))
    return PBoundReport(m=m, max_ratio=float(ratios[i]), worst_n=ns[i],
                        effective_pi_A=float(ratios[i]) * ptab.pi_A, violations=violations)
