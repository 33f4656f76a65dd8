"""Nonuniform time meshes and the step-ratio / grading conditions they must satisfy."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RHO_MAX = 7.0 / 4.0
RHO_RTOL = 1e-12
RANDOM_RHO_MIN = 0.2


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TimeMesh:
    """Time levels ``0 = t_0 < t_1 < ... < t_N = T`` with offset parameter ``theta``.

    Index conventions follow the math: ``tau[k-1]`` is the step ``t_k - t_{k-1}``,
    ``rho[k-1] = tau_k / tau_{k+1}`` and ``offset_nodes[n-1] = t_{n-theta}``.
    """

    nodes: np.ndarray
    theta: float
    tau: np.ndarray = field(init=False, repr=False, compare=False)
    rho: np.ndarray = field(init=False, repr=False, compare=False)
    offset_nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise MeshError("mesh needs at least two nodes")
        if nodes[0] != 0.0:
            raise MeshError("mesh must start at t_0 = 0")
        tau = np.diff(nodes)
        if np.any(tau <= 0):
            raise MeshError("mesh nodes must be strictly increasing")
        if not 0.0 <= self.theta < 0.5:
            raise MeshError("theta must lie in [0, 1/2)")
        offsets = self.theta * nodes[:-1] + (1.0 - self.theta) * nodes[1:]
        for name, arr in (("nodes", nodes), ("tau", tau), ("rho", tau[:-1] / tau[1:]),
                          ("offset_nodes", offsets)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def max_step(self) -> float:
        return float(self.tau.max())

    @property
    def max_ratio(self) -> float:
        return float(self.rho.max()) if self.rho.size else 0.0

    def t(self, k: int) -> float:
        return float(self.nodes[k])

    def step(self, k: int) -> float:
        """``tau_k`` for ``1 <= k <= N``."""
        return float(self.tau[k - 1])

    def ratio(self, k: int) -> float:
        """``rho_k`` for ``1 <= k <= N-1``."""
        return float(self.rho[k - 1])

    def offset(self, n: int) -> float:
        """``t_{n-theta}`` for ``1 <= n <= N``."""
        return float(self.offset_nodes[n - 1])

    def with_theta(self, theta: float) -> TimeMesh:
        return TimeMesh(self.nodes, theta)

    def fingerprint(self) -> str:
        h = hashlib.sha1(self.nodes.tobytes())
        h.update(repr(self.theta).encode())
        return h.hexdigest()[:12]


def graded_mesh(T: float, N: int, gamma: float, theta: float) -> TimeMesh:
    """Graded mesh ``t_k = T (k/N)^gamma``."""
    if T <= 0 or N < 1:
        raise MeshError("need T > 0 and N >= 1")
    if gamma < 1:
        raise MeshError("grading exponent gamma must be >= 1")
    k = np.arange(N + 1, dtype=float)
    nodes = T * (k / N) ** gamma
    nodes[-1] = T
    return TimeMesh(nodes, theta)


def uniform_mesh(T: float, N: int, theta: float) -> TimeMesh:
    return graded_mesh(T, N, 1.0, theta)


def two_part_split(N: int, gamma: float, T: float = 1.0) -> tuple[float, int]:
    """Breakpoint ``T_0`` and graded-part size ``N_0`` of :func:`two_part_mesh`."""
    T0 = T * 2.0 ** (-gamma)
    # guard the ceiling against roundoff in an exactly integral quotient
    N0 = math.ceil(gamma * N / (2.0**gamma - 1.0 + gamma) - 1e-9)
    return T0, N0


def two_part_mesh(T: float, N: int, gamma: float, theta: float) -> TimeMesh:
    """Graded mesh on ``[0, T_0]`` followed by a uniform mesh on ``[T_0, T]``.

    ``T_0 = 2^-gamma T`` and ``N_0 = ceil(gamma N / (2^gamma - 1 + gamma))``; the
    uniform step is never smaller than the last graded step.
    """
    if T <= 0 or N < 1:
        raise MeshError("need T > 0 and N >= 1")
    if gamma < 1:
        raise MeshError("grading exponent gamma must be >= 1")
    T0, N0 = two_part_split(N, gamma, T)
    if N0 >= N or N0 < 1:
        raise MeshError(f"N={N} too small for the two-part split (N_0={N0})")
    graded = T0 * (np.arange(N0 + 1) / N0) ** gamma
    graded[-1] = T0
    step = (T - T0) / (N - N0)
    uniform = T0 + step * np.arange(1, N - N0 + 1)
    uniform[-1] = T
    return TimeMesh(np.concatenate([graded, uniform]), theta)


def random_admissible_mesh(T: float, N: int, rho_max: float = RHO_MAX, seed: int = 0,
                           theta: float = 0.0) -> TimeMesh:
    """Random mesh whose step ratios all lie in ``[0.2, rho_max]``.

    Ratios are drawn uniformly from ``[0.2, 7/4]`` and clipped at ``rho_max``,
    so a cap below 7/4 puts an atom of exactly equal-ratio steps at the cap.
    """
    if N < 2:
        raise MeshError("random meshes need N >= 2")
    if not 0 < rho_max <= RHO_MAX:
        raise MeshError("rho_max must lie in (0, 7/4]")
    rng = np.random.default_rng(seed)
    ratios = np.minimum(rng.uniform(RANDOM_RHO_MIN, RHO_MAX, size=N - 1), rho_max)
    # tau_{k+1} = tau_k / rho_k
    steps = np.concatenate([[1.0], 1.0 / np.cumprod(ratios)])
    nodes = np.concatenate([[0.0], np.cumsum(steps)])
    nodes *= T / nodes[-1]
    nodes[-1] = T
    return TimeMesh(nodes, theta)


@dataclass(frozen=True)
class MeshConditionReport:
    m1_ok: bool
    theta_ok: bool
    max_ratio: float
    worst_ratio_index: int
    m2_ok: bool
    c_gamma: float
    c_gamma_index: int
    c_gamma_ceiling: float
    gamma: float


def check_conditions(mesh: TimeMesh, alpha: float, gamma: float,
                     c_gamma_ceiling: float = 10.0) -> MeshConditionReport:
    """Check the step-ratio condition M1 and fit the grading constant of M2.

    M1 requires ``theta == alpha/2`` exactly and every ``rho_k <= 7/4``.
    M2 is reported as the smallest ``C_gamma`` satisfying its three
    inequalities, compared against ``c_gamma_ceiling``.
    """
    theta_ok = mesh.theta == alpha / 2
    if mesh.rho.size:
        worst = int(np.argmax(mesh.rho))
        rho = float(mesh.rho[worst])
        worst_index = worst + 1
    else:
        rho, worst_index = 0.0, 0
    m1_ok = theta_ok and rho <= RHO_MAX * (1 + RHO_RTOL)

    t, tau, tmax = mesh.nodes, mesh.tau, mesh.max_step
    # tau_k <= C tau min(1, t_k^(1 - 1/gamma)), 1 <= k <= N
    c1 = tau / (tmax * np.minimum(1.0, t[1:] ** (1.0 - 1.0 / gamma)))
    candidates = [(float(c1.max()), int(np.argmax(c1)) + 1)]
    if mesh.N >= 2:
        # t_k <= C t_{k-1} and tau_k / t_k <= C tau_{k-1} / t_{k-1}, 2 <= k <= N
        c2 = t[2:] / t[1:-1]
        c3 = (tau[1:] / t[2:]) / (tau[:-1] / t[1:-1])
        candidates.append((float(c2.max()), int(np.argmax(c2)) + 2))
        candidates.append((float(c3.max()), int(np.argmax(c3)) + 2))
    c_gamma, c_index = max(candidates)
    return MeshConditionReport(m1_ok=m1_ok, theta_ok=theta_ok, max_ratio=rho,
                               worst_ratio_index=worst_index,
                               m2_ok=c_gamma <= c_gamma_ceiling, c_gamma=c_gamma,
                               c_gamma_index=c_index, c_gamma_ceiling=c_gamma_ceiling,
                               gamma=gamma)


def save_mesh(mesh: TimeMesh, path) -> None:
    """Write one node per line under a ``# theta=<value>`` header (exact round-trip)."""
    lines = [f"# theta={mesh.theta!r}"] + [repr(float(t)) for t in mesh.nodes]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> TimeMesh:
    theta = 0.0
    nodes = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key.strip() == "theta":
                theta = float(value)
            continue
        nodes.append(float(line))
    return TimeMesh(np.array(nodes), theta)
