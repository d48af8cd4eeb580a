"""Command-line harness.

Subcommands:
  generate     write one replication's dataset CSV
  run          run the configured methods, write traces + summary
  compare      like run, but requires htgd, mini-batch SGD and full GD
  diagnostics  covariance diagnostics at the stationary point
  validate     execute the oracle battery

Exit codes: 0 success, 1 validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .experiments import (
    UnfairBudgetError,
    generate_data_file,
    run_diagnostics,
    run_experiment,
)
from .validation import VALIDATION_SEED, run_validation

EXIT_OK = 0
EXIT_VALIDATION_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htgd",
        description="Survey-sampled stochastic gradient descent harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a dataset CSV")
    _add_config_arg(gen)
    gen.add_argument("--replication", type=int, default=0)

    for name, doc in (("run", "run the configured methods"),
                      ("compare", "run htgd + mini-batch SGD + full GD")):
        cmd = sub.add_parser(name, help=doc)
        _add_config_arg(cmd)
        cmd.add_argument("--jobs", type=int, default=1,
                         help="parallel replication workers")
        cmd.add_argument("--allow-unfair-budget", action="store_true",
                         help="skip the gradient-budget fairness check")

    diag = sub.add_parser("diagnostics", help="covariance diagnostics")
    _add_config_arg(diag)

    val = sub.add_parser("validate", help="run the oracle battery")
    val.add_argument("--seed", type=int, default=VALIDATION_SEED)
    return parser


def _load(args) -> "ExperimentConfig":
    config = load_config(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            config = _load(args)
            path = generate_data_file(config, out_dir=args.out,
                                      replication=args.replication)
            print(f"wrote {path}")
            return EXIT_OK

        if args.command in ("run", "compare"):
            config = _load(args)
            if args.command == "compare":
                kinds = {opt.optimizer_kind for opt in config.methods.values()}
                missing = {"htgd", "minibatch_sgd", "full_gd"} - kinds
                if missing:
                    raise ConfigError(
                        f"compare needs all three optimizers; missing {sorted(missing)}"
                    )
            result = run_experiment(config, out_dir=args.out, jobs=args.jobs,
                                    allow_unfair_budget=args.allow_unfair_budget)
            for name, counts in result.gradient_evals.items():
                total = sum(counts)
                print(f"{name}: {total} gradient evaluations "
                      f"over {len(counts)} replications")
            print(f"wrote {result.summary_path}")
            return EXIT_OK

        if args.command == "diagnostics":
            config = _load(args)
            path = run_diagnostics(config, out_dir=args.out)
            print(f"wrote {path}")
            return EXIT_OK

        if args.command == "validate":
            results = run_validation(seed=args.seed)
            failed = [r for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} checks passed")
            return EXIT_OK if not failed else EXIT_VALIDATION_FAILURE

    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except UnfairBudgetError as err:
        print(f"refusing to run: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
