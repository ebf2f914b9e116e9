import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from lending.errors import LendingError, RejectedInput
from lending.harness import demand_summary, reproduce, run, sweep, validate
from lending.learners import bounds_table
from lending.metrics import fit_scaling
from lending.scenario import format_validation_error, load_config, load_settings

logger = logging.getLogger("lending")

# --- Exit codes ---
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

LOG_FORMAT = "[%(levelname)s][%(name)s][%(asctime)s] %(message)s"


# --- Argument parsing ---

def parse_t_grid(text):
    """'128,256,512' -> [128, 256, 512]."""
    try:
        grid = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"T grid must be a comma-separated list of integers, got {text!r}")
    if not grid:
        raise argparse.ArgumentTypeError("T grid is empty")
    return grid


def parse_seed(text):
    try:
        seed = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return seed


def build_parser(settings):
    parser = argparse.ArgumentParser(prog="main.py", description="Lending-market regret simulator")
    parser.add_argument("--log-level", default=settings.log_level,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write its artifacts")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=parse_seed)
    p.add_argument("--out", type=Path)
    p.add_argument("--exact", action="store_true", help="rational arithmetic for the closed-form examples")

    p = sub.add_parser("sweep", help="run a scenario over a T grid with repetitions")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=parse_seed)
    p.add_argument("--out", type=Path)
    p.add_argument("--t-grid", type=parse_t_grid)
    p.add_argument("--reps", type=int)
    p.add_argument("--workers", type=int, default=settings.workers)

    p = sub.add_parser("reproduce", help="compare an example stream with its closed forms")
    p.add_argument("example", type=int, choices=[1, 2, 3])
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--out", type=Path)
    p.add_argument("--exact", action="store_true")

    p = sub.add_parser("validate", help="check the demand and market assumptions of a scenario")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=parse_seed)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("bounds", help="tabulate the regret bounds over a T grid")
    p.add_argument("--G", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--diam", type=float, default=1.0)
    p.add_argument("--path-length", type=float, default=0.0)
    p.add_argument("--t-grid", type=parse_t_grid, default=[10, 100, 1000, 10000])
    p.add_argument("--out", type=Path)

    p = sub.add_parser("fit", help="fit regret scaling to a CSV with columns T, regret")
    p.add_argument("csv", type=Path)
    p.add_argument("--out", type=Path)
    return parser


def _out_dir(args, config, settings):
    if args.out is not None:
        return args.out
    if config.output.out_dir:
        return Path(config.output.out_dir)
    return Path(settings.out_dir) / config.name


# --- Subcommands ---

def cmd_run(args, settings):
    config = load_config(args.config)
    out = _out_dir(args, config, settings)
    result = run(config, out, seed=args.seed, exact=args.exact)
    summary = dict(result.report)
    if result.trajectory is not None:
        summary.update(demand_summary(result.stream, result.trajectory.horizon))
    summary.pop("per_step", None)
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return EXIT_OK


def cmd_sweep(args, settings):
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    out = _out_dir(args, config, settings)
    registry_url = settings.db_url if config.output.registry else None
    result = sweep(config, out, t_grid=args.t_grid, reps=args.reps, workers=args.workers,
                   registry_url=registry_url)
    print(result.medians.to_string(index=False))
    if result.fit is not None:
        print(f"\ndominant term: {result.fit.dominant} ({result.fit.sign})")
        print(f"dynamic regret dominant term: {result.dynamic_fit.dominant}")
    if result.polylog is not None:
        print(f"regret / (log T)^2 bound check: {'pass' if result.polylog.passed else 'fail'}")
    return EXIT_OK


def cmd_reproduce(args, settings):
    table = reproduce(args.example, args.T, args.delta, exact=args.exact)
    print(table.to_string(index=False))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.out / f"reproduce_example{args.example}_T{args.T}.csv", index=False, float_format="%.17g")
    return EXIT_OK


def cmd_validate(args, settings):
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    reports = validate(config)
    for report in reports:
        print(f"{report.assumption:<30} {report.status:<15} {report.detail}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "assumptions.json").write_text(
            json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_bounds(args, settings):
    table = pd.DataFrame(bounds_table(args.G, args.mu, args.diam, args.path_length, args.t_grid))
    print(table.to_csv(index=False, float_format="%.6g"), end="")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.out / "bounds.csv", index=False, float_format="%.12g")
    return EXIT_OK


def cmd_fit(args, settings):
    if not args.csv.is_file():
        raise RejectedInput(f"regret CSV not found: {args.csv}")
    frame = pd.read_csv(args.csv)
    if not {"T", "regret"} <= set(frame.columns):
        raise RejectedInput(f"{args.csv} needs columns T and regret")
    fit = fit_scaling(frame["T"].tolist(), frame["regret"].tolist())
    print(json.dumps(fit.to_dict(), indent=2, sort_keys=True))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "fit.json").write_text(json.dumps(fit.to_dict(), indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "reproduce": cmd_reproduce,
    "validate": cmd_validate,
    "bounds": cmd_bounds,
    "fit": cmd_fit,
}


def main(argv=None):
    try:
        settings = load_settings()
    except RejectedInput as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    args = build_parser(settings).parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        return COMMANDS[args.command](args, settings)
    except ValidationError as e:
        print("configuration error:", file=sys.stderr)
        for line in format_validation_error(e):
            print(f"  {line}", file=sys.stderr)
        return EXIT_CONFIG
    except RejectedInput as e:
        print(f"rejected input: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except LendingError as e:
        logger.exception("run failed")
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


# --- Main Execution Block ---
if __name__ == '__main__':
    sys.exit(main())
