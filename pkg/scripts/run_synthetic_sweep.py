#!/usr/bin/env python3
"""Utility sweeps on vMF data over the sphere.

Each sweep varies one variable and holds the others at the defaults
(unit S², n=500, std=0.1, ε_total=0.3). Writes results.csv,
aggregate.csv and an error chart per sweep under ``--out/<name>``.

    python scripts/run_synthetic_sweep.py --sweep epsilon --reps 10 --workers 4
"""

import argparse
import dataclasses
from pathlib import Path

from conformal_dp.experiment import ExperimentConfig, run_experiment
from conformal_dp.report import report

SWEEPS = {
    "epsilon": {"epsilon_total": [0.1, 0.3, 0.5, 1.0, 2.0]},
    "n": {"n_samples": [100, 250, 500, 1000]},
    "std": {"vmf_std": [0.1, 0.5, 1.0, 5.0, 10.0]},
    "dim": {"dim": [3, 4, 6, 10]},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sweep", choices=[*SWEEPS, "all"], default="all")
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("out/synthetic"))
    args = ap.parse_args()

    base = ExperimentConfig(repetitions=args.reps, base_seed=args.seed)
    names = list(SWEEPS) if args.sweep == "all" else [args.sweep]
    for name in names:
        cfg = dataclasses.replace(base, sweep=SWEEPS[name])
        records = run_experiment(cfg, workers=args.workers)
        paths = report(records, args.out / name)
        failed = sum(1 for r in records if r.error)
        print(f"{name}: {len(records)} rows, {failed} failed -> {paths[-1]}")


if __name__ == "__main__":
    main()
