"""Command-line entry point: ``hjbfpk solve | validate | merton``."""

from __future__ import annotations

import argparse
import logging
import sys

import tomli

from .config import ConfigError, load_config
from .diagnostics import merton_refinement
from .pipeline import EXIT_CONFIG, EXIT_DIAGNOSTIC, EXIT_OK, MERTON_TOL, run_pipeline, run_validation

# flag name -> (section path, key)
_FLAG_KEYS = {
    "r": (("economics",), "r"),
    "rho": (("economics",), "rho"),
    "gamma": (("economics",), "gamma"),
    "y": (("economics",), "y"),
    "sigma": (("economics",), "sigma"),
    "a_max": (("grid",), "a_max"),
    "n_a": (("grid",), "n_a"),
    "max_iter": (("solver",), "max_iter"),
    "relaxation": (("solver",), "relaxation"),
    "out": (("outputs",), "directory"),
}


def _parse_set(item):
    if "=" not in item:
        raise ConfigError("--set", item, "expected section.key=value")
    path, raw = item.split("=", 1)
    parts = path.strip().split(".")
    if len(parts) < 2:
        raise ConfigError("--set", path, "expected section.key=value")
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return parts[:-1], parts[-1], value


def _put(tree, sections, key, value):
    node = tree
    for name in sections:
        node = node.setdefault(name, {})
    node[key] = value


def build_overrides(args) -> dict:
    tree: dict = {}
    for item in args.set or []:
        _put(tree, *_parse_set(item))
    for flag, (sections, key) in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            _put(tree, sections, key, value)
    if args.seed is not None:
        _put(tree, ("simulation", "w2"), "seed", args.seed)
        _put(tree, ("simulation", "mc"), "seed", args.seed)
    if getattr(args, "checks", None) is not None:
        names = [c for c in args.checks.split(",") if c]
        _put(tree, ("checks",), "enabled", names)
    return tree


def _add_common(p):
    p.add_argument("-c", "--config", help="TOML run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for both simulation checks")
    p.add_argument("--r", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--y", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--a-max", dest="a_max", type=float)
    p.add_argument("--n-a", dest="n_a", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--relaxation", type=float)
    p.add_argument("--checks", help="comma-separated subset of w2,merton,mc_density,fpk_flux")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override any config entry (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser():
    parser = argparse.ArgumentParser(prog="hjbfpk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run the full pipeline")
    _add_common(solve)

    validate = sub.add_parser("validate", help="run diagnostics on an emitted solution.csv")
    _add_common(validate)
    validate.add_argument("solution", help="path to solution.csv")

    merton = sub.add_parser("merton", help="sigma = 0 check over a grid-refinement sweep")
    _add_common(merton)
    merton.add_argument("--sizes", default="60,120,240,480", help="comma-separated grid sizes")
    return parser


def _print_summary(result):
    rep = result.report
    print(f"converged: {rep.converged} after {rep.iterations} iterations")
    for name, status in sorted(rep.status.items()):
        print(f"  {name:<11s} {status}")
    print(f"exit status {result.exit_code}")


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, build_overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "solve":
        result = run_pipeline(config)
        _print_summary(result)
        return result.exit_code

    if args.command == "validate":
        try:
            result = run_validation(config, args.solution)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        _print_summary(result)
        return result.exit_code

    sizes = tuple(int(s) for s in args.sizes.split(",") if s)
    rows = merton_refinement(config.economics, config.grid.a_max, sizes, config.solver)
    print(f"{'n_a':>6s}  {'rel_sup_error':>14s}")
    for n, err in rows:
        print(f"{n:6d}  {err:14.6e}")
    return EXIT_OK if all(err <= MERTON_TOL for _, err in rows) else EXIT_DIAGNOSTIC


if __name__ == "__main__":
    sys.exit(main())
