"""Command-line tool for simulating and evaluating model renewal on data streams."""

import argparse
import logging
import sys
from pathlib import Path

from datarenew.cli_handlers import handle_replay, handle_simulate, handle_sweep, handle_tune
from datarenew.run_conf import RunConf


# -----------------------------
# CLI Argument Parser
# -----------------------------
def build_parser():
    """Create the main parser and subparsers for the CLI."""
    parser = argparse.ArgumentParser(
        prog="datarenew",
        description="Decide when to retain, update or retrain a model on a data stream.",
        usage="datarenew [-h] <command> [<args>]",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""Examples:
  datarenew simulate --rows 300000 --drift abrupt:100000 --out run.csv
  datarenew simulate --model classification --drift gradual:50000:150000
  datarenew replay --csv stream.csv --schema schema.json --flags-only
  datarenew tune --rows 200000 --jobs 4 --out grid.csv
  datarenew sweep --sizes 1000 5000 10000 --drift abrupt:60000
Use "datarenew <command> --help" for more information on a command.""",
    )

    subparsers = parser.add_subparsers(
        title="Available commands",
        dest="command",
        metavar="<command>",
        required=True,
        help="Run 'datarenew <command> --help' for more details",
    )

    _add_run_subcommands(subparsers)
    return parser


# -----------------------------
# Subcommand Registration
# -----------------------------
def _add_common_arguments(p, stream: bool = True):
    """Flags shared by every subcommand; all default to None so config files can fill them."""
    p.add_argument("--config", type=Path, help="JSON run-config file (flags take precedence)")
    p.add_argument(
        "--save-config", dest="save_config", type=Path, help="Write the resolved settings as a config file"
    )
    p.add_argument("--batch", type=int, help="Rows per decision batch L (default: 10000)")
    p.add_argument("--initial", type=int, help="Rows of the initial training block (default: L)")
    p.add_argument("--sim-threshold", dest="sim_threshold", type=float, help="Similarity threshold z")
    p.add_argument("--lc-low", dest="lc_low", type=float, help="Lower loss-change bound x")
    p.add_argument("--lc-high", dest="lc_high", type=float, help="Upper loss-change bound y")
    p.add_argument("--model", choices=["regression", "classification"], help="Model kind")
    p.add_argument("--seed", type=int, help="Random seed for stream and training (default: 0)")
    p.add_argument("--out", help="Output CSV path")
    if stream:
        p.add_argument("--rows", type=int, help="Rows in the generated stream (default: 300000)")
        p.add_argument(
            "--drift", help="Drift of the generated stream: none | abrupt:ROW | gradual:START:END"
        )
        p.add_argument("--noise", type=float, help="Relative noise level of the generated stream")
        p.add_argument("--period", type=int, help="Rows per process cycle (default: 100)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--verbose", "-v", action="store_true", help="Log every decision")
    g.add_argument("--quiet", "-q", action="store_true", help="Only log errors")


def _add_run_subcommands(subparsers):
    # simulate
    p = subparsers.add_parser("simulate", help="Run the renewal pipeline on a generated stream")
    _add_common_arguments(p)
    p.add_argument("--flags-only", dest="flags_only", action="store_true", help="Omit metric columns")
    p.add_argument("--dump-stream", dest="dump_stream", help="Also write the stream (CSV + schema) here")
    p.set_defaults(func=cmd_simulate)

    # replay
    p = subparsers.add_parser("replay", help="Run the renewal pipeline on a recorded CSV stream")
    _add_common_arguments(p, stream=False)
    p.add_argument("--csv", help="Stream CSV file; the header names the attributes")
    p.add_argument("--schema", help="JSON schema sidecar of the CSV")
    p.add_argument("--flags-only", dest="flags_only", action="store_true", help="Omit metric columns")
    p.set_defaults(func=cmd_replay)

    # tune
    p = subparsers.add_parser("tune", help="Evaluate the threshold grid on one generated stream")
    _add_common_arguments(p)
    p.add_argument("--jobs", type=int, help="Grid cells evaluated in parallel (default: 1)")
    p.set_defaults(func=cmd_tune)

    # sweep
    p = subparsers.add_parser("sweep", help="Compare batch sizes L on one generated stream")
    _add_common_arguments(p)
    p.add_argument("--sizes", type=int, nargs="+", help="Batch sizes to compare (default: 1000 5000 10000)")
    p.set_defaults(func=cmd_sweep)


# -----------------------------
# Command Functions
# -----------------------------
def cmd_simulate(args):
    """Simulate a stream and its renewal decisions."""
    _run_handler(handle_simulate, args)


def cmd_replay(args):
    """Replay a recorded stream."""
    _run_handler(handle_replay, args)


def cmd_tune(args):
    """Threshold grid."""
    _run_handler(handle_tune, args)


def cmd_sweep(args):
    """Batch-size sweep."""
    _run_handler(handle_sweep, args)


# -----------------------------
# Helper Functions
# -----------------------------
def _configure_logging(args):
    level = logging.WARNING
    if getattr(args, "verbose", False):
        level = logging.INFO
    elif getattr(args, "quiet", False):
        level = logging.ERROR
    logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s", level=level, force=True)


def _run_handler(handler, args):
    """Resolve the run config and call the handler; any failure exits with status 1."""
    try:
        conf = RunConf(args.config)
        cfg = conf.resolve(args)
        if getattr(args, "save_config", None):
            conf.take_over(cfg)
            conf.save(args.save_config)
            print(f"💾 Settings saved to {args.save_config}")
        handler(cfg)
    except Exception as e:  # pylint: disable=broad-exception-caught
        print(f"❌ Error: {e}", file=sys.stderr)
        sys.exit(1)


# -----------------------------
# Main Entry Point
# -----------------------------
def main(argv=None):
    """Start main program."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        sys.exit(1)

    args = parser.parse_args(argv)
    _configure_logging(args)
    if hasattr(args, "func"):
        args.func(args)
    else:
        print(f"DEBUG: no function found for {args}")
        sys.exit(1)


if __name__ == "__main__":
    main()
