"""Command line interface.

    moistfem run <config-file> [--output-dir DIR] [--serial] [--max-steps N] [--restart CKPT]
    moistfem converge <config-file> --resolutions DX [DX ...] [--reference DX]

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 blow-up.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_BLOWUP = 4

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "BLIS_NUM_THREADS", "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moistfem", description="Moist compressible vertical-slice solver")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="flat key = value configuration file")
        sp.add_argument("--output-dir", help="directory for snapshots and diagnostics")
        sp.add_argument("--serial", action="store_true", help="single-threaded, deterministic linear algebra")
        sp.add_argument("--max-steps", type=int, help="stop after this many steps")
        sp.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    r = sub.add_parser("run", help="run one case")
    common(r)
    r.add_argument("--restart", help="checkpoint file to continue from")
    c = sub.add_parser("converge", help="spatial convergence of the moist gravity wave")
    common(c)
    c.add_argument("--resolutions", type=float, nargs="+", required=True,
                   help="grid spacings in metres (dx = dz)")
    c.add_argument("--reference", type=float, help="reference grid spacing (default: half the finest)")
    return p


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s level=%(levelname)s logger=%(name)s msg=%(message)s",
    )


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.serial:
        # must happen before numpy loads its BLAS
        for var in _THREAD_VARS:
            os.environ[var] = "1"
    if args.max_steps is not None and args.max_steps < 0:
        print("error: --max-steps must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    _configure_logging(args.verbose)
    log = logging.getLogger("moistfem")

    from .config import load_config
    from .errors import BlowUp, ConfigError, SolverFailure

    try:
        cfg = load_config(args.config)
        if args.output_dir:
            cfg = cfg.replace(output_dir=args.output_dir)
        if args.command == "run":
            from .driver import run

            result = run(cfg, max_steps=args.max_steps, restart=args.restart)
            log.info("wrote output to %s", result.output_dir)
        else:
            _converge(cfg, args, log)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except BlowUp as exc:
        log.error("blow-up: %s", exc)
        return EXIT_BLOWUP
    except SolverFailure as exc:
        log.error("solver failure: %s: %s", type(exc).__name__, exc)
        return EXIT_SOLVER
    except FileNotFoundError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    return EXIT_OK


def _converge(cfg, args, log) -> None:
    import csv
    from pathlib import Path

    from .driver import convergence_suite, final_state

    res = convergence_suite(cfg, args.resolutions, args.reference, args.max_steps, final_state)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "convergence.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dx", "l2_error"])
        for dx, err in res.rows():
            w.writerow([repr(dx), repr(err)])
    print(f"{'dx [m]':>10} {'L2 error':>14}")
    for dx, err in res.rows():
        print(f"{dx:10g} {err:14.6e}")
    print(f"reference dx = {res.reference_dx:g} m, fitted slope = {res.slope:.3f}")
    log.info("slope=%.4f reference_dx=%g", res.slope, res.reference_dx)


if __name__ == "__main__":
    sys.exit(main())
