"""Equal-budget sweep on random JSSP: step-reconsider against one SBS round
and i.i.d. sampling, each baseline granted k * ceil(h(s)) samples.

    python scripts/jssp_equal_budget.py --jobs 6 --machines 6 --s 1 2 3 6 12 36
"""
import argparse
from pathlib import Path

import numpy as np

from reconsider.harness import (
    compare,
    heuristic_policy,
    paired_difference,
    summarize,
    write_results,
    write_summary,
)
from reconsider.policy import load_checkpoint
from reconsider.problems import random_jssp


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--jobs", type=int, default=6)
    parser.add_argument("--machines", type=int, default=6)
    parser.add_argument("--instances", type=int, default=100)
    parser.add_argument("--k", type=int, nargs="+", default=[16])
    parser.add_argument("--s", type=int, nargs="+", default=[6])
    parser.add_argument("--reps", type=int, default=10)
    parser.add_argument("--seed", type=int, default=8)
    parser.add_argument("--checkpoint", type=Path, help="theta checkpoint; default heuristic")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("runs/jssp_equal_budget"))
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    instances = [random_jssp(args.jobs, args.machines, rng) for _ in range(args.instances)]
    policy = load_checkpoint(args.checkpoint) if args.checkpoint else heuristic_policy("jssp")
    rows = compare(instances, policy, args.k, args.s, ["step-reconsider", "sbs-plain", "iid"],
                   reps=args.reps, seed=args.seed, timing=False, workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    write_results(args.out / "rows.csv", rows)
    summary = summarize(rows)
    write_summary(args.out / "summary.csv", summary)
    for row in sorted(summary, key=lambda r: (r.k, r.s, r.strategy)):
        print(f"k={row.k:3d} s={row.s:3d} {row.strategy:<16} makespan {-row.mean_objective:8.2f}"
              f" +- {row.stderr_objective:.2f}")
    for k in args.k:
        for s in args.s:
            subset = [r for r in rows if r.k == k and r.s == s]
            diff, se = paired_difference(subset, "step-reconsider", "sbs-plain")
            print(f"k={k} s={s}: step-reconsider - sbs-plain objective {diff:+.3f} +- {se:.3f}")


if __name__ == "__main__":
    main()
