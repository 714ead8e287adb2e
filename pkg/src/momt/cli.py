"""Command-line front end.

    momt run <config> --out <dir> [--baseline mvdr] [--interp K] [--seed N]
    momt verify <config>
    momt oracle <config>

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import sys

from .scenarios import ConfigError, load_scenario, oracle_check, run_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momt",
        description="Multi-marginal transport solvers for covariance-based "
                    "spatial spectral estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write artifacts")
    run.add_argument("config", help="scenario file (key = value sections)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--baseline", choices=["mvdr"], default=None,
                     help="also emit the non-coherent MVDR baseline spectra")
    run.add_argument("--interp", type=int, default=None, metavar="K",
                     help="interpolated spectra at K points between observations")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")

    verify = sub.add_parser("verify", help="validate a scenario file")
    verify.add_argument("config")

    oracle = sub.add_parser("oracle", help="cross-check structured projections "
                                           "against the brute-force oracle")
    oracle.add_argument("config")
    oracle.add_argument("--trials", type=int, default=5)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            load_scenario(args.config)
            print(f"{args.config}: OK")
            return 0
        if args.command == "oracle":
            worst = oracle_check(args.config, trials=args.trials)
            print(f"max relative projection error vs brute force: {worst:.3e}")
            if worst > 1e-10:
                print("FAIL: structured projections disagree with the oracle")
                return 1
            return 0
        status = run_scenario(args.config, args.out,
                              baseline=args.baseline == "mvdr",
                              interp=args.interp, seed=args.seed)
        if status == 3:
            print("solver did not converge (report written)", file=sys.stderr)
        return status
    except ConfigError as err:
        for msg in err.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
