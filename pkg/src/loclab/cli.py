"""Command line entry point: ``loclab <stage> [options]``.

Exit codes: 0 success, 2 configuration error, 3 missing upstream stage,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import classical, eigensolver, husimi
from .cache import CacheError
from .config import ConfigError, load_config
from .pipeline import STAGES, MissingStage, run_stage

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4

NUMERICAL_ERRORS = (ArithmeticError, FloatingPointError, eigensolver.IllConditionedBasis,
                    classical.BounceError, classical.SeedNotChaoticError, husimi.NullBoundaryFunction,
                    CacheError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _lambdas(text):
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad lambda list {text!r}") from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="INI file with experiment parameters")
    common.add_argument("--cache-dir", help="cache directory (overrides the config)")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--jobs", type=int, help="worker processes for independent items")
    common.add_argument("--lambda", dest="lambdas", type=_lambdas,
                        help="comma-separated lambda values (default: configured set)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="loclab", description="Staged localization analysis of the quadratic-map billiard.",
                parents=[common])
    sub = p.add_subparsers(dest="stage", required=True, parser_class=_Parser)
    for stage in STAGES:
        sp = sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
        if stage == "spectrum":
            sp.add_argument("--k-lo", type=float, help="lower end of a single custom window")
            sp.add_argument("--k-hi", type=float, help="upper end of a single custom window")
            sp.add_argument("--parity", choices=eigensolver.PARITIES)
        if stage == "report":
            sp.add_argument("--out", default=None, help="directory for the CSV files")
    return p


def _config_from(args):
    opt = lambda name: getattr(args, name, None)  # noqa: E731
    cfg = load_config(opt("config"), cache_dir=opt("cache_dir"), rng_seed=opt("seed"), jobs=opt("jobs"))
    if getattr(args, "parity", None):
        cfg = cfg.replace(parity=args.parity)
    k_lo, k_hi = getattr(args, "k_lo", None), getattr(args, "k_hi", None)
    if (k_lo is None) != (k_hi is None):
        raise ConfigError("--k-lo and --k-hi go together")
    if k_lo is not None:
        if not 0 < k_lo < k_hi:
            raise ConfigError("need 0 < k-lo < k-hi")
        cfg = cfg.replace(k_centers=(0.5 * (k_lo + k_hi),), window_width=k_hi - k_lo)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from(args)
        out = run_stage(cfg, args.stage, lambdas=getattr(args, "lambdas", None), out_dir=getattr(args, "out", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingStage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for r in out:
        if args.stage == "report":
            print(r)
        else:
            print(f"{r.stage}\t{r.label}\t{'cached' if r.cached else 'computed'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
