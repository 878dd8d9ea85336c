"""Command line entry point: ``hlab <subcommand> --config FILE --out DIR``.

Exit status: 0 when every check passed, 1 on a check or stage failure,
2 on usage or config errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .cell import export_correctors, flux_correctors, solve_correctors, weak_divergence
from .coefficients import CoefficientError
from .data import DataError
from .verify.config import EXPERIMENTS, PROFILES, ConfigError, load
from .verify.experiments import Pipeline, SweepReport, Workspace, coefficient, run_experiment
from .verify.norms import grad_lp, lp_domain

FIXED_KIND = {"homogenize": "homogenize", "corrector": "psi-decay", "kernel": "kernel-sweep"}
COMMANDS = ("cell", "homogenize", "solve", "corrector", "kernel", "sweep")


def _parser():
    p = argparse.ArgumentParser(prog="hlab", description="Periodic homogenization laboratory for Neumann problems.")
    p.add_argument("--version", action="version", version=f"hlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "cell": "solve cell and flux correctors, export them",
        "homogenize": "homogenized tensor with refinement study",
        "solve": "oscillatory Neumann solves for each epsilon",
        "corrector": "boundary correctors and the Psi decay profile",
        "kernel": "Neumann function columns, symmetry and decay",
        "sweep": "run the experiment named by experiment.kind",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", required=True, help="key = value config file")
        s.add_argument("--out", default="hlab-out", help="output directory")
        s.add_argument("--threads", type=int, default=1, help="concurrent epsilon pipelines")
        s.add_argument("--profile", choices=tuple(PROFILES), default="fast",
                       help="default epsilon grid when sweep.eps is not set")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (repeatable)")
    return p


def _overrides(items):
    out = {}
    for it in items:
        if "=" not in it:
            raise ConfigError(f"--set expects KEY=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_cell(cfg, args) -> int:
    A = coefficient(cfg)
    cs = solve_correctors(A, cfg["cell.n"], cfg["solver.tol"], cfg["solver.precond"])
    flux_correctors(cs, cfg["solver.tol"], cfg["solver.precond"])
    os.makedirs(args.out, exist_ok=True)
    export_correctors(cs, os.path.join(args.out, "correctors.bin"))
    summary = {
        "coefficient": A.name,
        "n": cs.n,
        "m": cs.m,
        "A_hat": cs.homogenized_tensor_flat().tolist(),
        "residuals": cs.residuals,
        "weak_divergence": weak_divergence(cs, 20),
    }
    with open(os.path.join(args.out, "cell.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print("A_hat =")
    print(np.array2string(np.asarray(summary["A_hat"]), precision=10))
    return 0


def cmd_solve(cfg, args) -> int:
    pipe = Pipeline(cfg, Workspace())
    os.makedirs(args.out, exist_ok=True)
    rows, status = [], 0
    for k, eps in enumerate(cfg.eps_list):
        try:
            u = pipe.u_eps(eps)
        except Exception as exc:
            print(f"FAIL  solve eps={eps:g}: {type(exc).__name__}: {exc}")
            rows.append({"eps": eps, "status": f"error: {exc}"})
            status = 1
            continue
        mesh = u.mesh
        path = os.path.join(args.out, f"solution-{k}.csv")
        head = "x,y," + ",".join(f"u{a + 1}" for a in range(u.m))
        np.savetxt(path, np.column_stack([mesh.nodes, u.values]), delimiter=",", header=head, comments="",
                   fmt="%.17g")
        rows.append({"eps": eps, "n": mesh.n, "h": mesh.h, "iterations": u.info["iterations"],
                     "residual": u.info["residual"], "compatibility": u.info["compatibility"],
                     "L2": lp_domain(u, 2.0), "gradL2": grad_lp(u, 2.0), "file": os.path.basename(path)})
        print(f"ok    solve eps={eps:g} n={mesh.n} iterations={u.info['iterations']} residual={u.info['residual']:.3e}")
    with open(os.path.join(args.out, "solve.json"), "w") as fh:
        json.dump({"schema": "hlab-report/1", "experiment": "solve", "version": __version__,
                   "config": cfg.echo(), "records": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status


def cmd_experiment(cfg, args) -> int:
    rep: SweepReport = run_experiment(cfg, threads=args.threads, out_dir=args.out)
    for line in rep.summary_lines():
        print(line)
    return rep.exit_status


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        over = _overrides(args.set)
        cfg = load(args.config, args.profile, over)
        want = FIXED_KIND.get(args.command)
        if want is not None:
            if cfg.kind not in (None, want):
                raise ConfigError(f"'{args.command}' runs experiment.kind={want}, config says {cfg.kind}")
            cfg.values["experiment.kind"] = want
        if args.command == "sweep" and cfg.kind is None:
            raise ConfigError(f"sweep needs experiment.kind, one of {EXPERIMENTS}")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        coefficient(cfg)  # validate catalog id and parameters up front
    except (ConfigError, CoefficientError, DataError) as exc:
        print(f"hlab: config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "cell":
            return cmd_cell(cfg, args)
        if args.command == "solve":
            return cmd_solve(cfg, args)
        return cmd_experiment(cfg, args)
    except (ConfigError, CoefficientError, DataError) as exc:
        print(f"hlab: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
