#!/usr/bin/env python3
"""Run a full coreset comparison on one of the stock synthetic regimes.

Usage:
    python scripts/run_benchmark.py --regime clean
    python scripts/run_benchmark.py --regime corrupted --ratios 0.5,0.8 --seed 3
    python scripts/run_benchmark.py --regime longtail --methods BETA,DOUBLE_END,RANDOM --plots

Regimes:
    clean:     balanced 10-class mixture, no label noise
    corrupted: 30% of training examples get their features blurred and labels resampled
    longtail:  geometric class imbalance (rarest class at 10% of the head)

Writes report.csv / quality.csv / histograms.csv under --out (default
runs/<regime>), plus SVG plots with --plots.
"""

import argparse
import sys

from pseudoprune.config import build_config
from pseudoprune.pipeline import COMPARE_DEFAULT_SEEDS, run_compare, workspace

REGIMES = {
    "clean": {},
    "corrupted": {
        "task.corruption_fraction": "0.3",
        "selection.method": "DOUBLE_END",
        "selection.cutoff_ratio": "0.1",
        "score.metric": "AUM",
    },
    "longtail": {
        "task.imbalance_factor": "0.1",
        "task.mean_radius": "4.5",
    },
}


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--regime", choices=sorted(REGIMES), default="clean")
    parser.add_argument("--out", default=None, help="output directory (default runs/<regime>)")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--methods", default="BETA,RANDOM", help="comma-separated selection methods")
    parser.add_argument("--ratios", default=None, help="comma-separated prune ratios (default from config)")
    parser.add_argument("--seeds", default=None, help="comma-separated replicate seeds (default 0-4)")
    parser.add_argument("--plots", action="store_true", help="also render SVG plots")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    overrides = dict(REGIMES[args.regime])
    overrides["out_dir"] = args.out if args.out is not None else f"runs/{args.regime}"
    overrides["master_seed"] = str(args.seed)
    cfg = build_config(overrides)

    methods = tuple(m.strip().upper() for m in args.methods.split(",") if m.strip())
    ratios = None if args.ratios is None else tuple(float(r) for r in args.ratios.split(","))
    seeds = COMPARE_DEFAULT_SEEDS if args.seeds is None else tuple(int(s) for s in args.seeds.split(","))

    print(f"regime={args.regime} methods={','.join(methods)} seed={args.seed}")
    run_compare(cfg, methods=methods, ratios=ratios, seeds=seeds, plots=args.plots)
    print(f"report: {workspace(cfg).report_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
