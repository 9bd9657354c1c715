"""Command-line entry point.

Exit codes: 0 on success, 2 when every requested instance was infeasible,
1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments

COMMANDS = {
    "fit-consensus": experiments.cmd_fit_consensus,
    "optimize": experiments.cmd_optimize,
    "sweep-kappa": experiments.cmd_sweep_kappa,
    "simulate": experiments.cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaykey",
        description="Relay-assisted key generation under frequency-hopping jamming.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [*COMMANDS, "validate"]:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--trials", type=int, help="Monte Carlo episodes")
        p.add_argument("--solvers", help="comma-separated: grid,greedy,greedy_uniform,nlp")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            from . import validation
            results = validation.run_all(seed=args.seed)
            for r in results:
                print(r.line())
            return 0 if all(r.passed for r in results) else 1
        raw = experiments.load_config(args.config) if args.config else {}
        solvers = args.solvers.split(",") if args.solvers else None
        cfg = experiments.resolve_config(raw, seed=args.seed, out=args.out,
                                         trials=args.trials, solvers=solvers)
        return COMMANDS[args.command](cfg)
    except Exception as exc:  # noqa: BLE001  report and map to exit code 1
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
