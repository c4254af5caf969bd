"""Command-line entry point.

Stages are separate subcommands so a pipeline can be resumed, inspected, or
fed an externally produced trajectory log between any two steps. Exit codes
are distinct per error class: 0 ok, 2 missing input, 3 unparseable artifact,
4 config violation, 5 log/pool dimension mismatch.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, build_config, parse_config_text
from .pipeline import (
    EXIT_CONFIG,
    EXIT_DIMENSION,
    EXIT_FORMAT,
    EXIT_MISSING_INPUT,
    EXIT_OK,
    FormatError,
    MissingInputError,
    run_compare,
    run_eval,
    run_gen,
    run_label,
    run_score,
    run_select,
    run_trainlog,
    run_tune,
)
from .scoring import DimensionMismatchError
from .selection import METHODS
from .trajectory import TrajectoryError

OUT_ENV_VAR = "PSEUDOPRUNE_OUT"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudoprune",
        description="Pseudo-label a pool, score training dynamics, and prune to a coreset.",
    )
    parser.add_argument("--config", metavar="PATH", help="key=value config file; defaults apply for missing keys")
    parser.add_argument("--out", metavar="DIR", help=f"output directory (overrides config and ${OUT_ENV_VAR})")
    parser.add_argument("--seed", type=int, metavar="N", help="master seed; stages derive their own from it")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", help="generate the synthetic task")

    p_label = sub.add_parser("label", help="build the pseudo-label pool from a small budget")
    p_label.add_argument("--budget", metavar="FRAC", help="override budget.fraction")

    sub.add_parser("trainlog", help="train the toy model and record its trajectory")

    p_score = sub.add_parser("score", help="score training dynamics from the trajectory log")
    p_score.add_argument("--metric", metavar="NAME", help="override score.metric")

    p_select = sub.add_parser("select", help="select a coreset from the score table")
    p_select.add_argument("--ratio", type=float, metavar="R", help="pruning ratio (default: first of `ratios`)")
    p_select.add_argument("--method", metavar="NAME", help="override selection.method")

    sub.add_parser("tune", help="search selection hyperparameters on a held-out pseudo-labeled split")

    p_eval = sub.add_parser("eval", help="retrain on the selected coreset and score the test split")
    p_eval.add_argument("--ratio", type=float, metavar="R", help="pruning ratio of the plan to evaluate")
    p_eval.add_argument("--method", metavar="NAME", help="method of the plan to evaluate")

    p_cmp = sub.add_parser("compare", help="run the full protocol over methods x ratios x seeds")
    p_cmp.add_argument("--methods", metavar="A,B", help="comma list of selection methods (default: config method)")
    p_cmp.add_argument("--ratios", metavar="R1,R2", help="comma list of pruning ratios (default: config ratios)")
    p_cmp.add_argument("--seeds", metavar="S1,S2", help="comma list of replicate seeds (default: 0,1,2,3,4)")
    p_cmp.add_argument("--budget", metavar="FRAC", help="override budget.fraction")
    p_cmp.add_argument("--metric", metavar="NAME", help="override score.metric")
    p_cmp.add_argument("--plots", action="store_true", help="also emit SVG score/class histograms")
    return parser


def _parse_method_list(text: str) -> tuple:
    methods = tuple(part.strip().upper() for part in text.split(",") if part.strip())
    for method in methods:
        if method not in METHODS:
            raise ConfigError(f"unknown selection method {method!r}; choose from {METHODS}")
    return methods


def _parse_float_list(text: str) -> tuple:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_int_list(text: str) -> tuple:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def resolve_config(args):
    """Shipped defaults, then $PSEUDOPRUNE_OUT, then the config file, then flags."""
    values = parse_config_text(Path(args.config).read_text()) if args.config else {}
    env_out = os.environ.get(OUT_ENV_VAR)
    if env_out and "out_dir" not in values:
        values["out_dir"] = env_out
    if args.out:
        values["out_dir"] = args.out
    if args.seed is not None:
        values["master_seed"] = str(args.seed)
    if getattr(args, "budget", None):
        values["budget.fraction"] = args.budget
    if getattr(args, "metric", None):
        values["score.metric"] = args.metric.upper()
    if getattr(args, "method", None):
        values["selection.method"] = args.method.upper()
    return build_config(values)


def _dispatch(args) -> str:
    cfg = resolve_config(args)
    if args.command == "gen":
        return run_gen(cfg)
    if args.command == "label":
        return run_label(cfg)
    if args.command == "trainlog":
        return run_trainlog(cfg)
    if args.command == "score":
        return run_score(cfg)
    if args.command == "select":
        return run_select(cfg, ratio=args.ratio)
    if args.command == "tune":
        return run_tune(cfg)
    if args.command == "eval":
        return run_eval(cfg, ratio=args.ratio)
    methods = _parse_method_list(args.methods) if args.methods else None
    ratios = _parse_float_list(args.ratios) if args.ratios else None
    seeds = _parse_int_list(args.seeds) if args.seeds else None
    return run_compare(cfg, methods=methods, ratios=ratios, seeds=seeds, plots=args.plots)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = _dispatch(args)
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (FormatError, TrajectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DimensionMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
