"""Command line entry point: ``blindcal {gen,solve,phase,demo}``.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict

from . import __version__
from .experiments import PhaseGridSpec, emit_phase_csv, fit_reference_constant, \
    run_imaging_demo, run_phase_grid
from .sensing import Dimensions, load_instance, make_instance, save_instance
from .solver import SolverConfig, bc_iht_solve, evaluate, iht_solve_uncalibrated

log = logging.getLogger("blindcal")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser, out_help: str):
    p.add_argument("--seed", type=int, default=None, help="master RNG seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--out", default=None, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blindcal",
                                 description="Blind sensor-gain calibration with BC-IHT.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random problem instance")
    _common(g, "instance JSON path (default: stdout)")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--rho", type=float, default=0.5)
    g.add_argument("--compact", action="store_true",
                   help="store only the seed; arrays are regenerated on load")

    s = sub.add_parser("solve", help="solve a serialized instance")
    _common(s, "result JSON path")
    s.add_argument("instance")
    s.add_argument("--k", type=int, default=None, help="sparsity (default: instance k)")
    s.add_argument("--rho", type=float, default=None)
    s.add_argument("--stop-tol", type=float, default=1e-7)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--project-gains", action="store_true")
    s.add_argument("--uncalibrated", action="store_true",
                   help="run plain IHT with gains fixed at one")

    ph = sub.add_parser("phase", help="run a phase-transition grid")
    _common(ph, "CSV path (default: phase.csv)")
    ph.add_argument("--config", default=None, help="JSON grid spec")
    ph.add_argument("--paper-grid", action="store_true", help="use the full published grid")
    ph.add_argument("--trials", type=int, default=None)
    ph.add_argument("--no-timing", action="store_true",
                    help="write mean_seconds as 0 for byte-reproducible output")
    ph.add_argument("--fit-level", type=float, default=0.5,
                    help="probability contour used to fit the reference-curve constant")

    d = sub.add_parser("demo", help="compressive imaging demo")
    _common(d, "output directory (default: demo_out)")
    d.add_argument("--image", default=None, help="binary PGM/PPM (default: synthetic)")
    d.add_argument("--side", type=int, default=64)
    d.add_argument("--k", type=int, default=300)
    d.add_argument("--m", type=int, default=1764)
    d.add_argument("--p", type=int, default=5)
    d.add_argument("--rho", type=float, default=0.5)
    d.add_argument("--levels", type=int, default=None)
    d.add_argument("--stop-tol", type=float, default=1e-7)
    d.add_argument("--max-iters", type=int, default=5000)
    d.add_argument("--memory-budget", type=float, default=2.0,
                   help="GiB of dense matrix storage before switching to seed regeneration")
    d.add_argument("--gray", action="store_true", help="average colour channels")
    return ap


def _cmd_gen(args):
    dims = Dimensions(args.n, args.m, args.p, args.k)
    seed = 0 if args.seed is None else args.seed
    inst = make_instance(dims, args.rho, seed, compact=args.compact)
    if args.out:
        save_instance(inst, args.out, compact=args.compact)
    else:
        from .sensing import instance_to_dict
        json.dump(instance_to_dict(inst, args.compact), sys.stdout)
        sys.stdout.write("\n")


def _cmd_solve(args):
    inst = load_instance(args.instance)
    cfg = SolverConfig(k=inst.dims.k if args.k is None else args.k,
                       rho=inst.rho if args.rho is None else args.rho,
                       stop_tol=args.stop_tol, max_iters=args.max_iters,
                       project_gains=args.project_gains)
    solve = iht_solve_uncalibrated if args.uncalibrated else bc_iht_solve
    res = solve(inst.ensemble, inst.y, cfg)
    if args.out:
        res.save(args.out)
    report = {"iterations": res.iterations, "termination": res.termination,
              **asdict(evaluate(inst.x, inst.g, res))}
    print(json.dumps(report))


def _cmd_phase(args):
    if args.config and args.paper_grid:
        raise ValueError("--config and --paper-grid are mutually exclusive")
    if args.config:
        spec = PhaseGridSpec.load(args.config)
    elif args.paper_grid:
        spec = PhaseGridSpec.paper()
    else:
        spec = PhaseGridSpec()
    if args.trials is not None:
        spec.trials = args.trials
    if args.seed is not None:
        spec.master_seed = args.seed
    spec.validate()
    out = args.out or "phase.csv"

    def progress(done, total):
        if done == total or done % 50 == 0:
            log.info("%d/%d trials", done, total)

    result = run_phase_grid(spec, threads=args.threads, progress=progress)
    emit_phase_csv(result, out, timing=not args.no_timing)
    log.info("wrote %s (%d cells)", out, len(result.cells))
    for n in spec.n_values:
        for k in spec.k_values:
            try:
                C = fit_reference_constant(result, n, k, args.fit_level)
            except ValueError as exc:
                log.info("reference fit skipped: %s", exc)
                continue
            print(f"n={n} k={k} fitted C={C:.4g} (mp = C(k+m) at P={args.fit_level})")


def _cmd_demo(args):
    report = run_imaging_demo(
        image_path=args.image, side=args.side, k=args.k, m=args.m, p=args.p,
        rho=args.rho, seed=0 if args.seed is None else args.seed,
        out_dir=args.out or "demo_out", stop_tol=args.stop_tol, max_iters=args.max_iters,
        memory_budget=int(args.memory_budget * 1024 ** 3), levels=args.levels,
        grayscale=args.gray)
    print(json.dumps({k: v for k, v in report.items() if k != "channels"}, indent=2))


COMMANDS = {"gen": _cmd_gen, "solve": _cmd_solve, "phase": _cmd_phase, "demo": _cmd_demo}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"blindcal: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"blindcal: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        print(f"blindcal: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
