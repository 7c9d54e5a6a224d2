#!/usr/bin/env python3
"""Closed-loop LQR benchmarks from identified and learned models."""
import argparse
import json

from diffsmib import bench


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--out", default="results/lqr")
    ap.add_argument("--full", action="store_true")
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    for exp in ("lqr-dp", "lqr-node"):
        manifest = bench.run_experiment(exp, seeds, {},
                                        out_dir=f"{args.out}/{exp}",
                                        full=args.full)
        print(exp)
        print(json.dumps(manifest["aggregates"], indent=2))


if __name__ == "__main__":
    main()
