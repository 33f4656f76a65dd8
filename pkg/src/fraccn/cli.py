"""Command line interface: ``fraccn {solve,kernels,audit,consistency,convergence}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings

import numpy as np

from ._io import csv_target
from .complementary import build_complementary
from .consistency import ManufacturedFunction, full_report
from .fem import SpatialGrid, SubdiffusionProblem, l2_error, solve
from .harness import (MESH_FAMILIES, ExperimentConfig, load_config, make_mesh, run_audit_suite,
                      run_table)
from .kernels import build_kernel_table

log = logging.getLogger("fraccn")


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.replace(",", " ").split()]


def _common(p: argparse.ArgumentParser) -> None:
    # global flags are accepted after the subcommand as well
    p.add_argument("--config", default=argparse.SUPPRESS, help="key=value config file")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS, help="output CSV path (stdout if omitted)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fraccn", description=__doc__)
    ap.add_argument("--config", default=None, help="key=value config file; flags win")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for table rows")
    ap.add_argument("--out", default=None, help="output CSV path (stdout if omitted)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="manufactured subdiffusion solve, per-step L2 error")
    _common(s)
    s.add_argument("--alpha", type=float)
    s.add_argument("--kappa", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--N", type=int)
    s.add_argument("--M", type=int)
    s.add_argument("--mesh", choices=("graded", "twopart", "uniform"))
    s.add_argument("--T", type=float)
    s.add_argument("--nodal-out", help="also dump every U^n (one row per n)")

    k = sub.add_parser("kernels", help="dump one kernel row (and optionally P)")
    _common(k)
    k.add_argument("--alpha", type=float)
    k.add_argument("--mesh", choices=MESH_FAMILIES)
    k.add_argument("--mesh-file")
    k.add_argument("--N", type=int)
    k.add_argument("--gamma", type=float)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--row", type=int, help="row n to dump (default N)")
    k.add_argument("--method", choices=("closed", "quadrature"), default="closed")
    k.add_argument("--complementary", help="also write P^{(n)} rows to this CSV")

    a = sub.add_parser("audit", help="kernel inequality certificates")
    _common(a)
    a.add_argument("--alpha", type=_floats)
    a.add_argument("--mesh", choices=MESH_FAMILIES)
    a.add_argument("--mesh-file")
    a.add_argument("--N", type=_ints)
    a.add_argument("--gamma", type=_floats)
    a.add_argument("--seeds", type=_ints, help="seed list, e.g. 0,1,2 (empty string for none)")
    a.add_argument("--trials", type=int, default=200, help="random vectors for the quadratic form")

    c = sub.add_parser("consistency", help="truncation errors and ECS majorants")
    _common(c)
    c.add_argument("--alpha", type=float)
    c.add_argument("--sigma", type=float)
    c.add_argument("--mesh", choices=MESH_FAMILIES)
    c.add_argument("--mesh-file")
    c.add_argument("--N", type=int)
    c.add_argument("--gamma", type=float)
    c.add_argument("--seed", type=int, default=0)

    v = sub.add_parser("convergence", help="e(N) tables with empirical orders")
    _common(v)
    v.add_argument("--alpha", type=_floats)
    v.add_argument("--sigma", type=_floats)
    v.add_argument("--gamma", type=_floats)
    v.add_argument("--N", type=_ints)
    v.add_argument("--M", type=int)
    v.add_argument("--kappa", type=float)
    v.add_argument("--mesh", choices=("graded", "twopart", "uniform"))
    v.add_argument("--T", type=float)
    return ap


_CONFIG_KEYS = ("alpha", "sigma", "gamma", "N", "M", "kappa", "T", "mesh", "seeds", "mesh_file",
                "out", "threads")


def _config(args) -> ExperimentConfig:
    overrides = {}
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key in ("alpha", "sigma", "gamma", "N") and not isinstance(value, list):
            value = [value]
        overrides[key] = value
    return load_config(args.config, overrides)


def _target(cfg: ExperimentConfig):
    return sys.stdout if cfg.out in (None, "-") else cfg.out


def cmd_solve(args, cfg: ExperimentConfig) -> int:
    alpha, sigma, gamma, N = cfg.alpha[0], cfg.sigma[0], cfg.gamma[0], cfg.N[0]
    mesh = make_mesh(cfg.mesh, N, alpha, gamma, T=cfg.T)
    prob = SubdiffusionProblem(alpha=alpha, kappa=cfg.kappa, T=cfg.T, sigma=sigma)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sol = solve(prob, mesh, SpatialGrid(cfg.M))
    for w in caught:
        log.warning("%s", w.message)
    err, eN = l2_error(sol)
    with csv_target(_target(cfg)) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "t_n", "error_L2"])
        for n in range(mesh.N + 1):
            w.writerow([n, repr(float(mesh.nodes[n])), f"{err[n]:.6e}"])
    if args.nodal_out:
        np.savetxt(args.nodal_out, sol.U, delimiter=",")
    log.info("e(N) = %.6e", eN)
    return 0


def cmd_kernels(args, cfg: ExperimentConfig) -> int:
    alpha, N = cfg.alpha[0], cfg.N[0]
    mesh = make_mesh(cfg.mesh, N, alpha, cfg.gamma[0], seed=args.seed, T=cfg.T,
                     mesh_file=cfg.mesh_file)
    table = build_kernel_table(mesh, alpha, method=args.method)
    n = args.row or mesh.N
    table.write_row_csv(n, _target(cfg))
    if args.complementary:
        ptab = build_complementary(table)
        ptab.write_csv(args.complementary, ns=[n])
    return 0


def cmd_audit(args, cfg: ExperimentConfig) -> int:
    report = run_audit_suite(cfg, trials=args.trials)
    report.write_csv(_target(cfg))
    for label, cert in report.certificates:
        bad = [c.name for c in cert.checks if not c.passed]
        log.info("%s: %s", label, "all checks pass" if not bad else f"failing: {', '.join(bad)}")
    return report.exit_code


def cmd_consistency(args, cfg: ExperimentConfig) -> int:
    alpha, N = cfg.alpha[0], cfg.N[0]
    mesh = make_mesh(cfg.mesh, N, alpha, cfg.gamma[0], seed=args.seed, T=cfg.T,
                     mesh_file=cfg.mesh_file)
    v = ManufacturedFunction.power(cfg.sigma[0])
    rep, glob = full_report(build_kernel_table(mesh, alpha), v)
    rep.write_csv(_target(cfg))
    if rep.ecs_violations:
        log.warning("ECS bound violated at n = %s", rep.ecs_violations)
    if not glob.ok:
        log.warning("global consistency error exceeds its majorant")
    return 1 if rep.ecs_violations else 0


def cmd_convergence(args, cfg: ExperimentConfig) -> int:
    reports = run_table(cfg)
    with csv_target(_target(cfg)) as fh:
        for rep in reports:
            rep.write_csv(fh)
    return 1 if any(r.error for rep in reports for r in rep.rows) else 0


_COMMANDS = {"solve": cmd_solve, "kernels": cmd_kernels, "audit": cmd_audit,
             "consistency": cmd_consistency, "convergence": cmd_convergence}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        cfg = _config(args)
    except (ValueError, KeyError) as exc:
        print(f"fraccn: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args, cfg)
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
