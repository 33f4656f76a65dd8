"""Batch drivers: convergence tables, audit suites and consistency suites."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ._io import csv_target
from .audit import AuditCertificate, audit_table
from .consistency import ManufacturedFunction, ecs_check
from .fem import SpatialGrid, SubdiffusionProblem, l2_error, solve
from .kernels import build_kernel_table
from .mesh import (RHO_MAX, TimeMesh, graded_mesh, load_mesh, random_admissible_mesh,
                   two_part_mesh, uniform_mesh)
from .special import DomainError

log = logging.getLogger(__name__)

MESH_FAMILIES = ("uniform", "graded", "twopart", "random", "file")


def _floats(value) -> list[float]:
    if isinstance(value, str):
        return [float(x) for x in value.replace(",", " ").split()]
    if isinstance(value, (int, float)):
        return [float(value)]
    return [float(x) for x in value]


def _ints(value) -> list[int]:
    return [int(round(x)) for x in _floats(value)]


@dataclass
class ExperimentConfig:
    alpha: list[float] = field(default_factory=lambda: [0.6])
    sigma: list[float] = field(default_factory=lambda: [1.6])
    gamma: list[float] = field(default_factory=lambda: [1.0])
    N: list[int] = field(default_factory=lambda: [64, 128, 256, 512])
    M: int = 4096
    kappa: float = 2.0
    T: float = 1.0
    mesh: str = "twopart"
    seeds: list[int] = field(default_factory=lambda: [0])
    mesh_file: str | None = None
    out: str | None = None
    threads: int = 1

    _LISTS = {"alpha": _floats, "sigma": _floats, "gamma": _floats, "N": _ints, "seeds": _ints}
    _SCALARS = {"M": int, "kappa": float, "T": float, "mesh": str, "mesh_file": str,
                "out": str, "threads": int}

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if any(n < 8 for n in self.N):
            raise ValueError("every N must be >= 8")
        if any(g < 1 for g in self.gamma):
            raise ValueError("gamma must be >= 1")
        if any(not 0 < a < 1 for a in self.alpha):
            raise ValueError("alpha must lie in (0, 1)")
        if self.mesh not in MESH_FAMILIES:
            raise ValueError(f"mesh family must be one of {MESH_FAMILIES}")
        if self.M < 2:
            raise ValueError("M must be >= 2")

    @classmethod
    def from_mapping(cls, values: dict) -> ExperimentConfig:
        kw = {}
        for key, raw in values.items():
            if raw is None:
                continue
            if key in cls._LISTS:
                kw[key] = cls._LISTS[key](raw)
            elif key in cls._SCALARS:
                kw[key] = cls._SCALARS[key](raw)
            else:
                raise KeyError(f"unknown config key {key!r}")
        return cls(**kw)

    def updated(self, overrides: dict) -> ExperimentConfig:
        """Copy with the non-``None`` entries of ``overrides`` applied."""
        base = {f.name: getattr(self, f.name) for f in fields(self) if not f.name.startswith("_")}
        for key, value in overrides.items():
            if value is not None:
                base[key] = value
        return ExperimentConfig.from_mapping(base)


def parse_config(text: str) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    values = parse_config(Path(path).read_text()) if path else {}
    cfg = ExperimentConfig.from_mapping(values)
    return cfg.updated(overrides or {})


# -- convergence tables ---------------------------------------------------------------

def expected_order(sigma: float, gamma: float) -> float:
    """``min(gamma sigma, 2)``."""
    if not (0 < sigma < 1 or 1 < sigma < 2):
        raise DomainError("sigma must lie in (0, 1) or (1, 2)")
    if gamma < 1:
        raise DomainError("gamma must be >= 1")
    return min(gamma * sigma, 2.0)


def empirical_orders(errors) -> list[float | None]:
    """``log2(e(N) / e(2N))`` between consecutive rows; the first entry is ``None``."""
    errors = list(errors)
    return [None] + [math.log2(errors[i - 1] / errors[i]) for i in range(1, len(errors))]


@dataclass
class ErrorRow:
    N: int
    eN: float | None
    order: float | None = None
    error: str | None = None


@dataclass
class ErrorReport:
    alpha: float
    sigma: float
    gamma: float
    M: int
    rows: list[ErrorRow]

    @property
    def expected(self) -> float | None:
        try:
            return expected_order(self.sigma, self.gamma)
        except DomainError:
            return None

    @property
    def orders(self) -> list[float | None]:
        return [r.order for r in self.rows]

    @property
    def errors(self) -> list[float | None]:
        return [r.eN for r in self.rows]

    def write_csv(self, path_or_handle) -> None:
        with csv_target(path_or_handle) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "eN", "order"])
            for r in self.rows:
                e = "" if r.eN is None else f"{r.eN:.6e}"
                q = "" if r.order is None else f"{r.order:.4f}"
                w.writerow([r.N, e, q])
            exp = "" if self.expected is None else f"{self.expected:.2f}"
            fh.write(f"# alpha={self.alpha} sigma={self.sigma} gamma={self.gamma} M={self.M} "
                     f"expected_order={exp}\n")


def make_mesh(family: str, N: int, alpha: float, gamma: float = 1.0, seed: int = 0,
              T: float = 1.0, mesh_file: str | None = None,
              rho_max: float = RHO_MAX) -> TimeMesh:
    theta = alpha / 2
    if family == "uniform":
        return uniform_mesh(T, N, theta)
    if family == "graded":
        return graded_mesh(T, N, gamma, theta)
    if family == "twopart":
        return two_part_mesh(T, N, gamma, theta)
    if family == "random":
        return random_admissible_mesh(T, N, rho_max=rho_max, seed=seed, theta=theta)
    if family == "file":
        if not mesh_file:
            raise ValueError("mesh family 'file' needs a mesh file")
        return load_mesh(mesh_file).with_theta(theta)
    raise ValueError(f"unknown mesh family {family!r}")


def solve_error(alpha: float, sigma: float, gamma: float, N: int, M: int, kappa: float = 2.0,
                T: float = 1.0, family: str = "twopart", mesh_file: str | None = None):
    """One manufactured solve; returns ``(e(N), DiscreteSolution)``."""
    mesh = make_mesh(family, N, alpha, gamma, T=T, mesh_file=mesh_file)
    prob = SubdiffusionProblem(alpha=alpha, kappa=kappa, T=T, sigma=sigma)
    # the table meshes exceed the kappa > 0 step cap; recorded on the solution
    sol = solve(prob, mesh, SpatialGrid(M), warn=False)
    return l2_error(sol)[1], sol


def run_table(config: ExperimentConfig) -> list[ErrorReport]:
    """One error table per ``(alpha, sigma, gamma)`` combination of the config."""
    reports = []
    jobs = [(a, s, g) for a in config.alpha for s in config.sigma for g in config.gamma]
    for a, s, g in jobs:
        def one(N, a=a, s=s, g=g):
            try:
                e, _ = solve_error(a, s, g, N, config.M, config.kappa, config.T,
                                   config.mesh, config.mesh_file)
                return ErrorRow(N, e)
            except Exception as exc:  # recorded per row
                log.warning("N=%d failed: %s", N, exc)
                return ErrorRow(N, None, error=str(exc))

        with ThreadPoolExecutor(max_workers=max(1, config.threads)) as pool:
            rows = list(pool.map(one, config.N))
        for i in range(1, len(rows)):
            prev, cur = rows[i - 1].eN, rows[i].eN
            if prev and cur:
                rows[i].order = math.log2(prev / cur)
        reports.append(ErrorReport(a, s, g, config.M, rows))
    return reports


# -- suites --------------------------------------------------------------------------

@dataclass
class AuditSuiteReport:
    certificates: list[tuple[str, AuditCertificate]] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if any(c.failures for _, c in self.certificates) else 0

    def pass_rates(self) -> dict[str, float]:
        stats: dict[str, list[bool]] = {}
        for _, cert in self.certificates:
            for chk in cert.checks:
                stats.setdefault(chk.name, []).append(chk.passed)
        return {k: sum(v) / len(v) for k, v in stats.items()}

    def worst_margins(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for _, cert in self.certificates:
            for chk in cert.checks:
                out[chk.name] = min(out.get(chk.name, math.inf), chk.worst_margin)
        return out

    def write_csv(self, path) -> None:
        with csv_target(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["check", "n", "k", "margin", "pass"])
            for _, cert in self.certificates:
                for row in cert.csv_rows():
                    w.writerow(row)


def _suite_meshes(config: ExperimentConfig, alpha: float, N: int):
    for seed in config.seeds:
        if config.mesh == "random":
            yield f"random(seed={seed})", seed, make_mesh("random", N, alpha, seed=seed, T=config.T)
        elif config.mesh in ("graded", "twopart"):
            for g in config.gamma:
                yield (f"{config.mesh}(gamma={g})", seed,
                       make_mesh(config.mesh, N, alpha, g, T=config.T))
        else:
            yield config.mesh, seed, make_mesh(config.mesh, N, alpha, T=config.T,
                                               mesh_file=config.mesh_file)


def run_audit_suite(config: ExperimentConfig, extra_meshes=(), trials: int = 200) -> AuditSuiteReport:
    """Audit every mesh of the configured family for each alpha, N and seed.

    ``extra_meshes`` holds ``(label, nodes)`` pairs run at every alpha with
    ``theta = alpha/2``; meshes outside the step-ratio condition are
    classified, not failed.
    """
    report = AuditSuiteReport()
    for alpha in config.alpha:
        for N in config.N:
            for label, seed, mesh in _suite_meshes(config, alpha, N):
                cert = audit_table(build_kernel_table(mesh, alpha), trials=trials, seed=seed)
                report.certificates.append((f"{label} alpha={alpha} N={N}", cert))
        for label, nodes in extra_meshes:
            mesh = TimeMesh(np.asarray(nodes, dtype=float), alpha / 2)
            cert = audit_table(build_kernel_table(mesh, alpha), trials=trials)
            report.certificates.append((f"{label} alpha={alpha}", cert))
    return report


@dataclass
class ConsistencySuiteReport:
    entries: list[tuple[str, object]] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        for _, rep in self.entries:
            if rep.ecs_violations or (rep.local_ok is not None and not rep.local_ok.all()):
                return 1
        return 0


def run_consistency_suite(config: ExperimentConfig) -> ConsistencySuiteReport:
    report = ConsistencySuiteReport()
    for alpha in config.alpha:
        for sigma in config.sigma:
            v = ManufacturedFunction.power(sigma)
            for N in config.N:
                for label, _, mesh in _suite_meshes(config, alpha, N):
                    rep = ecs_check(build_kernel_table(mesh, alpha), v)
                    report.entries.append((f"{label} alpha={alpha} sigma={sigma} N={N}", rep))
    return report


__all__ = [
    "ExperimentConfig", "ErrorReport", "ErrorRow", "AuditSuiteReport", "ConsistencySuiteReport",
    "parse_config", "load_config", "expected_order", "empirical_orders", "make_mesh",
    "solve_error", "run_table", "run_audit_suite", "run_consistency_suite",
]
