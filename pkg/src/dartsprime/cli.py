"""Command-line entry point: ``dartsprime <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from dartsprime import harness
from dartsprime.genotype import load_genotype
from dartsprime.plotting import plot_history


def _print_reports(reports) -> int:
    rows = harness.aggregate(reports)
    print(harness.format_table(rows), end="")
    failed = [r for r in reports if r.status != "ok"]
    for r in failed:
        print(f"FAILED {r.arm} seed {r.seed}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_search(args) -> int:
    exp = harness.ExperimentConfig.load(args.config)
    exp.arms = exp.arms[:1]
    if args.seed is not None:
        exp.seeds = [args.seed]
    return _print_reports(harness.run_experiment(exp))


def cmd_ablate(args) -> int:
    exp = harness.ExperimentConfig.load(args.config)
    if args.workers:
        exp.workers = args.workers
    return _print_reports(harness.run_experiment(exp))


def cmd_extended(args) -> int:
    exp = harness.ExperimentConfig.load(args.config)
    if args.every:
        exp.checkpoint_every = args.every
    for row in harness.run_extended(exp, seed=args.seed):
        err = "" if row["test_error"] is None else f"  test_error={row['test_error']:.4f}"
        print(f"epoch {row['epoch']:4d}  skip_fraction={row['skip_fraction']:.3f}{err}")
    return 0


def cmd_eval(args) -> int:
    exp = harness.ExperimentConfig.load(args.config)
    result = harness.evaluate_genotype(load_genotype(args.genotype), exp, args.seed)
    print(json.dumps({"test_error": result.test_error, "test_loss": result.test_loss,
                      "num_parameters": result.num_parameters}, indent=2))
    return 0


def cmd_plot(args) -> int:
    summary = plot_history(args.history, args.out)
    for path in summary.alpha_paths.values():
        print(path)
    print(summary.timeline_path)
    return 0


def cmd_report(args) -> int:
    return _print_reports(harness.report_directory(args.directory))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dartsprime", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="search + retrain for the first configured arm")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("ablate", help="every configured arm across every seed")
    p.add_argument("config")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("extended", help="checkpointed search for collapse diagnostics")
    p.add_argument("config")
    p.add_argument("--every", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_extended)

    p = sub.add_parser("eval", help="retrain a genotype JSON from scratch")
    p.add_argument("genotype")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="SVG plots from a history directory")
    p.add_argument("history")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("report", help="rebuild aggregate tables under a directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
