"""
Experiment Runner CLI

Runs LS-SGLD experiments from JSON config documents and prints the spectral and
bound tables directly.

    python run_experiments.py run configs/mixture.json --threads 8
    python run_experiments.py validate configs/blr.json
    python run_experiments.py gamma-table
    python run_experiments.py bounds --theorem nonconvex --constant K=5000
"""

import argparse
import logging
import sys
from typing import List, Optional

from errors import ConfigValidationError, SamplingError
from experiment_config import load_config
from experiments import BOUND_FIELDS, bound_constants, gamma_table_rows, run_experiment
from reports import format_value, write_csv_report
from theory_bounds import bounds_sweep

try:
    from config import BOUNDS_SIGMAS, GAMMA_DIMS, GAMMA_SIGMAS
except ImportError:
    # Fallback if config.py doesn't exist
    GAMMA_SIGMAS = [1.0, 2.0, 3.0, 4.0, 5.0]
    GAMMA_DIMS = [1000, 10000, 100000]
    BOUNDS_SIGMAS = [0.0, 0.5, 1.0, 1.5, 2.0]


def banner(title: str, lines: Optional[List[str]] = None) -> None:
    print("=" * 70)
    print(title)
    print("=" * 70)
    if lines:
        for line in lines:
            print(line)
        print("=" * 70)


def print_errors(errors: List[str]) -> None:
    for error in errors:
        print(f"ERROR: {error}")


def _cell(value) -> str:
    return f"{value:.6g}" if isinstance(value, float) else format_value(value)


def print_table(fieldnames: List[str], rows: List[dict]) -> None:
    cells = [[_cell(row.get(name)) for name in fieldnames] for row in rows]
    widths = [max([len(name)] + [len(c[i]) for c in cells]) for i, name in enumerate(fieldnames)]
    print("  ".join(name.rjust(w) for name, w in zip(fieldnames, widths)))
    for c in cells:
        print("  ".join(value.rjust(w) for value, w in zip(c, widths)))


def cmd_run(args) -> int:
    cfg = load_config(args.config, output_dir=args.output_dir, seed=args.seed, threads=args.threads)
    banner(f"{cfg.experiment.upper()} EXPERIMENT", [
        f"Config: {args.config}",
        f"Seeds: {', '.join(str(s) for s in cfg.seeds)}",
        f"Threads: {cfg.threads}",
        f"Output Directory: {cfg.output_dir}",
    ])

    result = run_experiment(cfg, progress=args.progress)

    print(f"\n{'='*70}")
    print("RUN SUMMARY")
    print("=" * 70)
    for headline in result.headlines:
        print("  " + ", ".join(f"{k}={_cell(v)}" for k, v in headline.items()))
    print(f"\n[+] {len(result.artifacts)} artifacts written")
    for path in result.artifacts:
        print(f"  - {path}")
    print(f"  Summary: {result.summary_path}")
    print("=" * 70)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"OK: {args.config} is a valid {cfg.experiment} config "
          f"({len(cfg.samplers)} samplers, {len(cfg.seeds)} seeds)")
    return 0


def cmd_gamma_table(args) -> int:
    rows = gamma_table_rows(args.sigmas, args.dims)
    fieldnames = ['sigma'] + [f"d={d}" for d in args.dims]
    banner("GAMMA_2 TABLE")
    print_table(fieldnames, rows)
    if args.output:
        write_csv_report(args.output, fieldnames, rows)
        print(f"\nSaved: {args.output}")
    return 0


def _parse_constants(pairs: List[str]) -> dict:
    constants = {}
    errors = []
    for pair in pairs or []:
        name, sep, value = pair.partition('=')
        if not sep:
            errors.append(f"--constant {pair!r}: expected NAME=VALUE")
            continue
        try:
            constants[name.strip()] = float(value)
        except ValueError:
            errors.append(f"--constant {name}: not a number: {value!r}")
    unknown = sorted(set(constants) - set(bound_constants({})))
    errors.extend(f"--constant {name}: unknown constant" for name in unknown)
    if errors:
        raise ConfigValidationError(errors)
    return constants


def cmd_bounds(args) -> int:
    base = bound_constants(_parse_constants(args.constant))
    theorems = ['convex', 'nonconvex'] if args.theorem == 'both' else [args.theorem]
    rows = []
    for theorem in theorems:
        rows.extend(bounds_sweep(args.sigmas, base, theorem, args.inverse_trace))

    banner("BOUND BREAKDOWN", [", ".join(f"{k}={v:g}" for k, v in base.items())])
    print_table(BOUND_FIELDS, rows)
    if args.output:
        write_csv_report(args.output, BOUND_FIELDS, rows)
        print(f"\nSaved: {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Laplacian-smoothing SGLD experiments: samplers, diagnostics, gamma_2 table and bounds'
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run the experiment described by a config file')
    run.add_argument('config', help='JSON config document')
    run.add_argument('-o', '--output-dir', help='Override the output directory')
    run.add_argument('-s', '--seed', type=int, help='Run a single seed instead of the config seed list')
    run.add_argument('-t', '--threads', type=int, help='Worker threads for independent cells')
    run.add_argument('--progress', action='store_true', help='Show progress bars')
    run.set_defaults(func=cmd_run)

    validate = sub.add_parser('validate', help='Check a config file without running it')
    validate.add_argument('config', help='JSON config document')
    validate.set_defaults(func=cmd_validate)

    gamma = sub.add_parser('gamma-table', help='Print the gamma_2 table')
    gamma.add_argument('--sigmas', type=float, nargs='+', default=GAMMA_SIGMAS)
    gamma.add_argument('--dims', type=int, nargs='+', default=GAMMA_DIMS)
    gamma.add_argument('--output', help='Also write the table to this CSV file')
    gamma.set_defaults(func=cmd_gamma_table)

    bounds = sub.add_parser('bounds', help='Evaluate the convergence bounds over sigma')
    bounds.add_argument('--theorem', choices=['convex', 'nonconvex', 'both'], default='both')
    bounds.add_argument('--sigmas', type=float, nargs='+', default=BOUNDS_SIGMAS)
    bounds.add_argument('--constant', action='append', metavar='NAME=VALUE',
                        help='Override one bound constant (repeatable), e.g. K=5000')
    bounds.add_argument('--inverse-trace', action='store_true',
                        help='Use mean(1/lambda) for gamma_2 instead of mean(1/lambda^2)')
    bounds.add_argument('--output', help='Also write the rows to this CSV file')
    bounds.set_defaults(func=cmd_bounds)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except ConfigValidationError as e:
        print_errors(e.errors)
        return 1
    except SamplingError as e:
        print(f"ERROR: {type(e).__name__}: {e}")
        return 1
    except OSError as e:
        print(f"ERROR: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
