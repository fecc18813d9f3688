"""Show how the dynamic threshold settles for a few values of r.

Feeds a constant averaged trace (or a decaying one) through the scheduler and
prints how often architecture steps fire once the threshold has adapted.
"""

import argparse

import numpy as np

from dartsprime.fimt import SchedulerConfig, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--trace", type=float, default=10.0, help="averaged trace value")
    ap.add_argument("--decay", type=float, default=0.0, help="per-step exponential decay of the trace")
    ap.add_argument("--r", type=float, nargs="+", default=[2.0, 10.0, 25.0])
    args = ap.parse_args()

    stream = args.trace * np.exp(-args.decay * np.arange(args.steps))
    print(f"{'r':>6} {'first fire':>11} {'alpha steps':>12} {'w-only steps':>13} {'w-only per alpha':>17}")
    for r in args.r:
        out = simulate(SchedulerConfig(kind="dynamic_fimt", r=r), stream)
        fired = np.array([f for _, _, f in out])
        first = int(np.argmax(fired)) if fired.any() else -1
        tail = fired[first:] if first >= 0 else fired
        n_alpha = int(tail.sum())
        ratio = (len(tail) - n_alpha) / max(n_alpha, 1)
        print(f"{r:6.1f} {first:11d} {n_alpha:12d} {len(tail) - n_alpha:13d} {ratio:17.3f}")


if __name__ == "__main__":
    main()
