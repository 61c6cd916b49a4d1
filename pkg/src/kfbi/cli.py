"""Command-line entry point.

    kfbi solve    <config.toml>   one run: field dumps + manifest + figure
    kfbi converge <config.toml>   refinement study: TSV table + manifest
    kfbi bench    <config.toml>   backend timing comparison

Exit codes: 0 success, 2 configuration/validation error, 3 solver failure
(non-convergence or detected instability).
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    ConfigError,
    ConvergenceError,
    DispatchError,
    ExtractionError,
    GeometryError,
    GridError,
    InstabilityError,
)

VALIDATION_ERRORS = (ConfigError, GeometryError, GridError, ExtractionError)
SOLVER_ERRORS = (ConvergenceError, InstabilityError, DispatchError)


def _add_common(sub):
    sub.add_argument("config", help="path to a TOML run configuration")
    sub.add_argument("--backend", help="override backend: serial or workers:<k>")
    sub.add_argument("--out-dir", help="override output directory")
    sub.add_argument("--snapshots", help="comma-separated snapshot times t1,t2,...")
    sub.add_argument("--no-figures", action="store_true",
                     help="skip matplotlib figure rendering")


def _parse_snapshots(text):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --snapshots value {text!r}; expected t1,t2,...")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="kfbi",
        description="Cartesian-grid boundary integral solver for heat, wave, "
                    "and Schrödinger problems on irregular domains",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve", "run one evolution and dump the final field"),
        ("converge", "run a grid refinement study and write the error table"),
        ("bench", "time the evolution loop on each configured backend"),
    ):
        _add_common(subs.add_parser(name, help=helptext))

    args = parser.parse_args(argv)

    try:
        from .config import load_config
        from .report import bench, convergence_study, solve_run

        cfg = load_config(args.config)
        figures = False if args.no_figures else None
        snapshots = _parse_snapshots(args.snapshots)

        if args.command == "solve":
            _, (e_inf, e_2), out = solve_run(
                cfg, out_dir=args.out_dir, backend=args.backend,
                snapshots=snapshots, figures=figures,
            )
            print(f"done: e_inf={e_inf:.6e} e_2={e_2:.6e} (outputs in {out})")
        elif args.command == "converge":
            report, table_path = convergence_study(
                cfg, out_dir=args.out_dir, backend=args.backend, figures=figures,
            )
            sys.stdout.write(table_path.read_text())
        else:
            if args.backend:
                cfg.backends = [args.backend]
            rows, bench_path = bench(cfg, out_dir=args.out_dir, figures=figures)
            sys.stdout.write(bench_path.read_text())
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
