#!/usr/bin/env python3
"""Augmentation efficiency: actual evaluations needed to reach a target
simple regret, with and without per-axis trend pseudo observations.

    python scripts/augmentation_experiment.py --seeds 20 --tolerance 0.01
"""

import argparse
import statistics
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from adaptkit import augment, refine
from adaptkit.objectives import QuadBowl


def evaluations_to_tolerance(seeds: int, budget: int, tolerance: float, augmented: bool):
    objective = QuadBowl(center=(0.6,))
    space = objective.space()
    counts = []
    for seed in range(seeds):
        cfg = refine.RefineConfig(
            budget_b=budget,
            n_init=3,
            seed=seed,
            augment=augment.AugmentConfig(grid_size=5, inflation_kappa=10.0) if augmented else None,
        )
        _, trace = refine.run_autorefine(lambda a: objective(a), space, cfg)
        hit = next(
            (r.index for r in trace.records if r.incumbent >= objective.optimum_value - tolerance),
            budget + 1,
        )
        counts.append(hit)
    return counts


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--budget", type=int, default=15)
    parser.add_argument("--tolerance", type=float, default=0.01)
    args = parser.parse_args()

    augmented = evaluations_to_tolerance(args.seeds, args.budget, args.tolerance, True)
    plain = evaluations_to_tolerance(args.seeds, args.budget, args.tolerance, False)
    print(f"augmented: median {statistics.median(augmented)}  counts {augmented}")
    print(f"plain:     median {statistics.median(plain)}  counts {plain}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
