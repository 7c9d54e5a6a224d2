#!/usr/bin/env python3
"""Forward-problem benchmarks: NODE and PINN trajectory fits per scenario.

Desk-scale by default (small nets, reduced epochs); pass --full for the
paper-scale configuration, which takes hours.
"""
import argparse
import json

from diffsmib import bench


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="0,1,2,3,4,5,6,7,8,9")
    ap.add_argument("--out", default="results/forward")
    ap.add_argument("--full", action="store_true")
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    for scenario in ("stable", "oscillatory"):
        for exp in ("forward-node", "forward-pinn"):
            manifest = bench.run_experiment(
                exp, seeds, {"scenario": scenario},
                out_dir=f"{args.out}/{exp}-{scenario}", full=args.full)
            print(exp, scenario)
            print(json.dumps(manifest["aggregates"], indent=2))


if __name__ == "__main__":
    main()
