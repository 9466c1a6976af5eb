"""Command line entry point.

Subcommands:

    solve-td      time-dependent solve from a config file
    solve-stat    stationary solve from a config file
    diagnose      recompute the diagnostics row from a checkpoint
    refine        dyadic refinement study over the configured ladder
    kernel-check  standalone convex-kernel property suite

Exit codes: 0 success and no flags, 1 usage/configuration/kernel failure,
2 solver non-convergence, 3 flagged growth in a refinement study.
Identical config and seed produce bitwise-identical CSV artifacts.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from . import diagnostics, solver
from .config import COMMANDS, ConfigError, parse_config_file
from .grid import GridSpec, PoissonSolver, load_field
from .model import InfeasibleModel

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGENCE = 2
EXIT_GROWTH_FLAG = 3

TRACE_COLUMNS = ["iteration", "gap_abs", "gap_rel", "primal_res", "dual_res", "rho"]


def _write_trace(path: Path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in trace:
            writer.writerow([
                str(row.iteration), repr(row.gap_abs), repr(row.gap_rel),
                repr(row.primal_res), repr(row.dual_res), repr(row.rho),
            ])


def _emit(out_dir: Path, rows, trace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    diagnostics.write_report_csv(out_dir / "report.csv", rows)
    if trace is not None:
        _write_trace(out_dir / "trace.csv", trace)


def _solve_command(cfg, args) -> int:
    grid = cfg.grid
    if args.command == "solve-stat" and grid.n_time != 0:
        grid = GridSpec(dim=grid.dim, n_space=grid.n_space, n_time=0)
    model = cfg.model.on_grid(grid)
    ck_dir = cfg.out_dir / "checkpoint"
    try:
        if grid.stationary:
            _, primal, dual, report = solver.solve_stationary(
                model, grid, cfg.solve,
                checkpoint_dir=ck_dir, checkpoint_every=cfg.checkpoint_every,
            )
        else:
            primal, dual, report = solver.solve_time_dependent(
                model, grid, cfg.solve,
                checkpoint_dir=ck_dir, checkpoint_every=cfg.checkpoint_every,
            )
    except solver.NonConvergence as exc:
        row = diagnostics.diagnose(model, exc.primal, exc.dual, congestion_s=cfg.congestion_s)
        row.failed = True
        _emit(cfg.out_dir, [row], exc.report.trace)
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    row = diagnostics.diagnose(model, primal, dual, congestion_s=cfg.congestion_s)
    _emit(cfg.out_dir, [row], report.trace)
    print(
        f"converged in {report.iterations} iterations, relative gap {report.gap_rel:.3e};"
        f" wrote {cfg.out_dir / 'report.csv'}"
    )
    return EXIT_OK


def _resume_command(cfg, args) -> int:
    opts = cfg.solve if cfg else solver.SolveOptions()
    out_dir = cfg.out_dir if cfg else Path(args.out or "out")
    ck_dir = out_dir / "checkpoint"
    try:
        result = solver.resume(args.resume, opts, checkpoint_dir=ck_dir,
                               checkpoint_every=cfg.checkpoint_every if cfg else 0)
    except solver.NonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    if len(result) == 4:
        _, primal, dual, report = result
    else:
        primal, dual, report = result
    model, _, _, _ = solver.load_checkpoint(args.resume)
    row = diagnostics.diagnose(model, primal, dual)
    _emit(out_dir, [row], report.trace)
    if report.penalty_changed:
        print("note: penalty differs from the checkpointed run", file=sys.stderr)
    print(f"resumed to iteration {report.iterations}, relative gap {report.gap_rel:.3e}")
    return EXIT_OK


def _diagnose_command(args, congestion_s=1.0) -> int:
    model, grid, st, manifest = solver.load_checkpoint(args.resume)
    path = Path(args.resume)
    with open(path / "phi.mfgf", "rb") as fh:
        phi, _ = load_field(fh, grid)
    with open(path / "alpha.mfgf", "rb") as fh:
        alpha, _ = load_field(fh, grid)
    primal, dual = solver._project_states(model, grid, st, phi, alpha, PoissonSolver(grid))
    row = diagnostics.diagnose(model, primal, dual, congestion_s=congestion_s)
    out_dir = Path(args.out or "out")
    _emit(out_dir, [row], None)
    print(f"wrote {out_dir / 'report.csv'} from checkpoint at iteration {manifest['iteration']}")
    return EXIT_OK


def _refine_command(cfg) -> int:
    grids = cfg.ladder_grids()
    study = diagnostics.refinement_study(
        cfg.model, grids, cfg.solve, congestion_s=cfg.congestion_s
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    diagnostics.write_report_csv(cfg.out_dir / "report.csv", study.rows)
    failed = [r for r in study.rows if r.failed]
    for flag in study.flags:
        print(
            f"flag: {flag.quantity} grew by {flag.ratio:.3f} from n={flag.coarse} to n={flag.fine}",
            file=sys.stderr,
        )
    if failed:
        print(f"{len(failed)} ladder rung(s) did not converge", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    if study.flags:
        return EXIT_GROWTH_FLAG
    print(f"refinement clean across {len(study.rows)} grids; wrote {cfg.out_dir / 'report.csv'}")
    return EXIT_OK


def _kernel_check_command(cfg) -> int:
    from .checks import run_kernel_checks

    if cfg is not None:
        model = cfg.model.on_grid(cfg.grid)
    else:
        from .models import get

        spec = get("td-bump-1d")
        model = spec.on_grid(GridSpec(dim=1, n_space=32, n_time=1, T=spec.T))
    results = run_kernel_checks(model)
    ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        ok = ok and res.passed
    return EXIT_OK if ok else EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torusmfg",
        description="Variational mean field game solver and diagnostics on the torus",
    )
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", type=Path, help="configuration file")
    parser.add_argument("--out", type=Path, help="output directory (overrides config)")
    parser.add_argument("--resume", type=Path, help="checkpoint directory to continue from")
    parser.add_argument("--threads", type=int, default=None, help="worker thread cap")
    parser.add_argument("--seed", type=int, default=None, help="seed override (u64)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    cfg = None
    if args.config is not None:
        try:
            cfg = parse_config_file(args.config, command=args.command)
        except ConfigError as exc:
            print(exc, file=sys.stderr)
            return EXIT_USAGE
        if args.out is not None:
            cfg.out_dir = args.out
        if args.seed is not None:
            cfg.solve.seed = args.seed

    try:
        if args.command == "kernel-check":
            return _kernel_check_command(cfg)
        if args.command == "diagnose":
            if args.resume is None:
                print("diagnose needs --resume <checkpoint>", file=sys.stderr)
                return EXIT_USAGE
            if not Path(args.resume).exists():
                print(f"checkpoint {args.resume} does not exist", file=sys.stderr)
                return EXIT_USAGE
            return _diagnose_command(args, congestion_s=cfg.congestion_s if cfg else 1.0)
        if cfg is None:
            print(f"{args.command} needs --config <path>", file=sys.stderr)
            return EXIT_USAGE
        if args.command == "refine":
            return _refine_command(cfg)
        if args.resume is not None:
            manifest = solver.read_manifest(args.resume)
            want_kind = "stat" if args.command == "solve-stat" else "td"
            if manifest["kind"] != want_kind:
                print("checkpoint kind does not match the command", file=sys.stderr)
                return EXIT_USAGE
            if (int(manifest["n_space"]), int(manifest["n_time"])) != (
                cfg.grid.n_space, cfg.grid.n_time,
            ):
                print("checkpoint grid does not match the configured grid", file=sys.stderr)
                return EXIT_USAGE
            return _resume_command(cfg, args)
        return _solve_command(cfg, args)
    except (InfeasibleModel, solver.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
