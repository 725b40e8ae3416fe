#!/usr/bin/env python3
"""Accuracy-vs-budget sweep with the synthetic stochastic agent.

Each trial is correct with probability p, so the majority-vote accuracy at
odd budget n has the closed form sum_{k>n/2} C(n,k) p^k (1-p)^(n-k). The
sweep measures the empirical curve (3 repetitions per budget, mean over
repetitions) and prints it against that oracle.

Usage: python3 scripts/sweep_synthetic.py [--p 0.6] [--items 100] [--out curve.csv]
"""
from __future__ import annotations

import argparse

from evoagent import (
    StochasticMCQRunner,
    SweepConfig,
    TrialBudget,
    expected_majority_accuracy,
    sweep_budgets,
    synthetic_items,
    write_curve_csv,
)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--p", type=float, default=0.6, help="per-trial correctness")
    parser.add_argument("--items", type=int, default=100)
    parser.add_argument("--budgets", default="1,3,5,9")
    parser.add_argument("--seeds", default="22,23,24")
    parser.add_argument("--out", default="", help="optional curve CSV path")
    args = parser.parse_args()

    budgets = [TrialBudget(int(b)) for b in args.budgets.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    sweep = SweepConfig(budgets=budgets, repetitions=len(seeds), seeds=seeds)
    items = synthetic_items(args.items)

    result = sweep_budgets(lambda _b, _r, _s: StochasticMCQRunner(args.p), items, sweep)

    print(f"p={args.p}  items={args.items}  seeds={seeds}")
    print(f"{'budget':>6}  {'measured':>9}  {'oracle':>8}  {'delta':>7}")
    for agg in result.aggregates:
        oracle = expected_majority_accuracy(args.p, agg.budget)
        print(f"{agg.budget:>6}  {agg.mean_accuracy:>9.4f}  {oracle:>8.4f}  "
              f"{agg.mean_accuracy - oracle:>+7.4f}")
    if args.out:
        write_curve_csv(result, args.out)
        print(f"curve written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
