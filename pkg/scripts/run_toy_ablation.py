"""Run a set of arms on the toy task and print the aggregate table.

Example:
    python scripts/run_toy_ablation.py --arms darts prime --seeds 101 102 --epochs 10
"""

import argparse
import logging

from dartsprime import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", help="optional base config file")
    ap.add_argument("--arms", nargs="+", default=["darts", "cs10", "fimt", "pr", "prime"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[101, 102, 103, 104])
    ap.add_argument("--epochs", type=int, help="search epochs")
    ap.add_argument("--random-baseline", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/toy_ablation")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    exp = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig()
    raw = {"arms": args.arms, "seeds": args.seeds, "output_dir": args.out,
           "random_baseline": args.random_baseline, "workers": args.workers}
    if args.epochs:
        raw["epochs"] = args.epochs
    override = harness.ExperimentConfig.from_mapping(raw)
    exp.arms, exp.seeds, exp.output_dir = override.arms, override.seeds, override.output_dir
    exp.random_baseline, exp.workers = override.random_baseline, override.workers
    exp.search.update(override.search)

    reports = harness.run_experiment(exp)
    print(harness.format_table(harness.aggregate(reports)), end="")
    print(f"results under {exp.output_dir}")


if __name__ == "__main__":
    main()
