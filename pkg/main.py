"""
EIV adjusted likelihood ratio toolkit
Main entry point for the command-line interface.
"""

import argparse
import logging
import os
import sys

from src import __version__
from src.ui.commands import EXIT_INPUT, EXIT_INTERNAL, CommandRunner
from src.utils.logger import setup_logger

EXIT_INTERRUPTED = 130


def default_threads():
    value = os.environ.get("EIV_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eivtest",
        description="Adjusted likelihood ratio tests for structural elliptical "
                    "errors-in-variables models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="mirror log records to stderr")
    parser.add_argument("--log-dir", default="logs", help="directory of the daily log file")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit the full model")
    fit.add_argument("data", help="CSV with header group,y1..yl,x")
    fit.add_argument("model", help="TOML model config")
    fit.add_argument("-o", "--out", required=True, help="output JSON")
    fit.add_argument("--seed", type=int, default=0, help="seed of the restart jitter")

    test = sub.add_parser("test", help="test a null hypothesis")
    test.add_argument("data", help="CSV with header group,y1..yl,x")
    test.add_argument("model", help="TOML model config")
    test.add_argument("--null", required=True, help="e.g. beta1@1=0,beta1@2=0")
    test.add_argument("-o", "--out", required=True, help="output JSON")
    test.add_argument("--rho-exponent", default="q-half", choices=["q-half", "p-half", "m-half"])
    test.add_argument("--seed", type=int, default=0, help="seed of the restart jitter")

    sim = sub.add_parser("simulate", help="run a null rejection-rate study")
    sim.add_argument("config", help="TOML simulation config")
    sim.add_argument("-o", "--out", required=True, help="output JSON (table goes to .txt)")
    sim.add_argument("--reps", type=int, default=None, help="override replications")
    sim.add_argument("--seed", type=int, default=None, help="override master_seed")
    sim.add_argument("--threads", type=int, default=default_threads(),
                     help="worker processes (default: $EIV_THREADS or 1)")

    gen = sub.add_parser("generate", help="write a simulated dataset")
    gen.add_argument("config", help="TOML simulation config")
    gen.add_argument("-o", "--out", required=True, help="output CSV")
    gen.add_argument("--seed", type=int, default=None, help="override master_seed")
    gen.add_argument("--row", type=int, default=0, help="sweep row (0-based)")
    return parser


def command_arguments(args):
    """Map parsed arguments to CommandRunner.run keyword arguments."""
    if args.command == "fit":
        return dict(data_path=args.data, model_config_path=args.model, out_path=args.out,
                    seed=args.seed)
    if args.command == "test":
        return dict(data_path=args.data, model_config_path=args.model, null_spec=args.null,
                    out_path=args.out, rho_exponent=args.rho_exponent, seed=args.seed)
    if args.command == "simulate":
        return dict(sim_config_path=args.config, out_path=args.out, replications=args.reps,
                    seed=args.seed, threads=args.threads)
    return dict(sim_config_path=args.config, out_path=args.out, seed=args.seed, row=args.row)


def main(argv=None):
    """Parse arguments, run one command and exit with its code."""
    args = build_parser().parse_args(argv)
    logger = setup_logger(log_dir=args.log_dir,
                          log_level=logging.DEBUG if args.verbose else logging.INFO,
                          console=args.verbose)

    if getattr(args, "threads", 1) < 1:
        print("[ERROR] --threads must be at least 1")
        sys.exit(EXIT_INPUT)

    try:
        logger.info(f"=== eivtest {args.command} started ===")
        code = CommandRunner().run(args.command, **command_arguments(args))
        logger.info(f"=== eivtest {args.command} finished with exit code {code} ===")
        sys.exit(code)

    except KeyboardInterrupt:
        print("\n\n[INFO] Interrupted by user")
        logger.info("Program interrupted by user")
        sys.exit(EXIT_INTERRUPTED)

    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        print(f"\n[ERROR] Unexpected error: {e}")
        sys.exit(EXIT_INTERNAL)


if __name__ == "__main__":
    main()
