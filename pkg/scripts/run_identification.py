#!/usr/bin/env python3
"""Inverse-problem benchmarks: inertia and damping recovery under noise.

Runs the solver-backprop and inverse-PINN identifiers on the oscillatory
scenario at each noise level, plus the data-weight sweep.
"""
import argparse
import json

from diffsmib import bench


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--sigmas", default="0,0.01,0.05")
    ap.add_argument("--out", default="results/inverse")
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--lambda-sweep", action="store_true",
                    help="also run the data-weight sweep (slow)")
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]
    sigmas = [float(s) for s in args.sigmas.split(",")]

    for exp in ("inverse-dp", "inverse-pinn"):
        for sigma in sigmas:
            manifest = bench.run_experiment(
                exp, seeds, {"sigma": sigma},
                out_dir=f"{args.out}/{exp}-sigma{sigma:g}", full=args.full)
            print(exp, "sigma", sigma)
            print(json.dumps(manifest["aggregates"], indent=2))

    if args.lambda_sweep:
        manifest = bench.run_experiment(
            "lambda-sweep", seeds, {},
            out_dir=f"{args.out}/lambda-sweep", full=args.full)
        print(json.dumps(manifest["aggregates"], indent=2))


if __name__ == "__main__":
    main()
