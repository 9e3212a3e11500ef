from __future__ import annotations

import argparse

COMMANDS = ("u", "mz", "vn", "hj", "verify", "xcheck")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavvex",
        description="Values of zero-sum games with correlated private types.",
    )
    parser.add_argument("--spec", default=None, help="Path to a JSON game spec.")
    parser.add_argument(
        "--command",
        choices=COMMANDS,
        default=None,
        help="Solver to run: u, mz, vn, hj, verify or xcheck.",
    )
    parser.add_argument(
        "--out",
        default="out",
        help="Directory for CSV files and the run report (default: out).",
    )
    parser.add_argument("--grid-m", type=int, default=None, dest="grid_m", help="Belief grid resolution m.")
    parser.add_argument("--dt", type=float, default=None, help="Time step of the HJ scheme.")
    parser.add_argument("--seed", type=int, default=None, help="Seed for sampled probes.")
    parser.add_argument(
        "--n-max",
        type=int,
        default=None,
        dest="n_max",
        help="Longest repeated game solved by vn and xcheck.",
    )
    parser.add_argument(
        "--verify",
        action="store_true",
        help="Run the matching verifier right after solving.",
    )

    subparsers = parser.add_subparsers(dest="action")
    config = subparsers.add_parser("config", help="Manage the .env settings registry.")
    config_subparsers = config.add_subparsers(dest="config_command", required=True)
    init = config_subparsers.add_parser(
        "init", help="Create or extend .env with every known CAVVEX_* key."
    )
    init.add_argument("--env", default=".env", help="Path of the .env file (default: .env).")
    show = config_subparsers.add_parser("show", help="Print the resolved solver settings.")
    show.add_argument("--env", default=".env", help="Path of the .env file (default: .env).")

    return parser


def setting_overrides(args: argparse.Namespace) -> dict[str, object]:
    """CLI flags that override solver settings, skipping those left unset."""
    names = ("grid_m", "dt", "seed", "n_max")
    return {name: getattr(args, name) for name in names if getattr(args, name, None) is not None}
