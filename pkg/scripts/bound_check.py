#!/usr/bin/env python3
"""Instantaneous-bound experiment: fraction of selection rounds where the
gap to the optimum exceeds twice the confidence radius, aggregated over
seeded smooth objectives. The fraction should stay below delta.

    python scripts/bound_check.py --seeds 200 --delta 0.1
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from adaptkit import acquire, metrics, refine
from adaptkit.objectives import GpSample


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=200)
    parser.add_argument("--budget", type=int, default=10)
    parser.add_argument("--delta", type=float, default=0.1)
    parser.add_argument("--lengthscale", type=float, default=0.2)
    args = parser.parse_args()

    beta_cfg = acquire.BetaConfig(delta=args.delta, d=1)
    violations, rounds = 0.0, 0
    for seed in range(args.seeds):
        objective = GpSample(seed=seed, d=1, signal_var=1.0, lengthscale=args.lengthscale)
        trace, f_opt = refine.run_gp_ucb_grid(
            objective.value_at, d=1, budget=args.budget, seed=seed, beta_cfg=beta_cfg,
            signal_var=1.0, lengthscale=args.lengthscale, noise_var=1e-8,
            n_init=3, grid_size=256,
        )
        fraction = metrics.check_instantaneous_bound(trace, f_opt)
        n = sum(1 for r in trace.records if r.phase == "ucb")
        violations += fraction * n
        rounds += n
    aggregate = violations / rounds
    status = "OK" if aggregate <= args.delta else "VIOLATED"
    print(f"violating fraction {aggregate:.4f} over {rounds} rounds "
          f"(delta={args.delta}): {status}")
    return 0 if aggregate <= args.delta else 1


if __name__ == "__main__":
    sys.exit(main())
