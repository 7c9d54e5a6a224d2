"""Command-line entry points for simulation, training, and benchmarks.

Every subcommand accepts ``--config FILE`` with a JSON object whose keys
mirror the long flag names (hyphens or underscores); flags given on the
command line take precedence over config-file values.  Successful runs
exit 0; failures print a one-line JSON error object to stderr and exit 1.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, lqr
from .smib import equilibrium, linearize

__all__ = ["main", "build_parser"]


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    opts = {
        "scenario": dict(choices=sorted(bench.SCENARIOS), help="scenario name"),
        "sigma": dict(type=float, help="multiplicative noise level"),
        "seeds": dict(help="comma-separated seed list, e.g. 0,1,2"),
        "epochs": dict(type=int, help="training epochs"),
        "lr": dict(type=float, help="learning rate"),
        "m": dict(type=int, help="segment length in samples"),
        "lambda_d": dict(type=float, help="data loss weight"),
        "out": dict(help="output directory"),
    }
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), **opts[name])
    p.add_argument("--config", help="JSON config file; flags take precedence")
    p.add_argument("--full", action="store_true", default=None,
                   help="use full-size networks and epoch counts")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="diffsmib",
        description="Single-machine-infinite-bus benchmarks for PINN, "
                    "neural-ODE, and differentiable-programming models.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a scenario and write a CSV")
    _add_common(p, "scenario", "sigma", "seeds", "out")

    p = sub.add_parser("train-pinn", help="forward PINN trajectory fit")
    _add_common(p, "scenario", "seeds", "epochs", "lr", "lambda_d", "out")

    p = sub.add_parser("train-node", help="neural-ODE trajectory fit")
    _add_common(p, "scenario", "sigma", "seeds", "epochs", "lr", "m", "out")

    p = sub.add_parser("identify-dp", help="inertia/damping fit by solver backprop")
    _add_common(p, "sigma", "seeds", "epochs", "lr", "m", "out")

    p = sub.add_parser("identify-pinn", help="inertia/damping fit by inverse PINN")
    _add_common(p, "sigma", "seeds", "epochs", "lr", "lambda_d", "out")

    p = sub.add_parser("lqr-run", help="closed-loop LQR recovery")
    p.add_argument("--source", choices=("true", "dp", "node"), default="dp",
                   help="where the linear model comes from")
    _add_common(p, "seeds", "epochs", "out")

    p = sub.add_parser("benchmark", help="run a named experiment end to end")
    p.add_argument("experiment", choices=bench.EXPERIMENT_IDS)
    _add_common(p, "scenario", "sigma", "seeds", "epochs", "lr", "m",
                "lambda_d", "out")

    return ap


def _load_config(args: argparse.Namespace) -> dict:
    """Merge config-file values under explicit flags."""
    merged = {k: v for k, v in vars(args).items() if v is not None}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a JSON object")
        for key, val in raw.items():
            key = key.replace("-", "_")
            if merged.get(key) is None:
                merged[key] = val
    return merged


def _seeds(cfg: dict) -> list[int]:
    raw = cfg.get("seeds", "0")
    if isinstance(raw, list):
        return [int(s) for s in raw]
    return [int(s) for s in str(raw).split(",") if s != ""]


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out", "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _overrides(cfg: dict) -> dict:
    keys = ("scenario", "sigma", "epochs", "lr", "m", "lambda_d")
    return {k: cfg[k] for k in keys if cfg.get(k) is not None}


def _cmd_simulate(cfg: dict) -> dict:
    sc = bench.SCENARIOS[cfg.get("scenario", "stable")]
    sigma = float(cfg.get("sigma", 0.0))
    out = _out_dir(cfg)
    written = []
    for seed in _seeds(cfg):
        traj = bench.add_noise(bench.reference_trajectory(sc),
                               bench.NoiseModel(sigma, seed))
        path = out / f"simulate_{sc.name}_sigma{sigma:g}_seed{seed}.csv"
        traj.to_csv(path)
        written.append(str(path))
    return {"command": "simulate", "scenario": sc.name, "sigma": sigma,
            "files": written}


def _cmd_benchmark(cfg: dict, experiment: str) -> dict:
    return bench.run_experiment(experiment, _seeds(cfg), _overrides(cfg),
                                out_dir=_out_dir(cfg),
                                full=bool(cfg.get("full", False)))


def _cmd_lqr_run(cfg: dict) -> dict:
    source = cfg.get("source", "dp")
    out = _out_dir(cfg)
    if source == "node":
        seed = _seeds(cfg)[0]
        net = bench.full_net(3) if cfg.get("full") else bench.desk_net(3)
        result, _, _, _ = bench.run_lqr_node(seed, int(cfg.get("epochs", 2000)),
                                             net, out)
        return {"command": "lqr-run", "source": "node", "seed": seed, **result}
    if source == "dp":
        result, _, _ = bench.run_lqr_dp(float(cfg.get("theta_m", 0.1003)),
                                        float(cfg.get("theta_d", 0.0124)), out)
        return {"command": "lqr-run", "source": "dp", **result}
    sc = bench.SCENARIOS["control-dp"]
    xs = equilibrium(sc.params)
    sol = lqr.solve_care(linearize(sc.params, xs), lqr.LqrConfig())
    sched = lqr.DisturbanceSchedule(0.1, (1.0, 2.0), 5.0)
    run = lqr.closed_loop_simulate(sc.params, xs, sol, sched, sc.grid, x0=xs)
    run.to_csv(out / "lqr_true_gain.csv")
    cost = lqr.quadratic_cost(run.trajectory, run.u, xs, sc.params.Pm,
                              lqr.LqrConfig())
    return {"command": "lqr-run", "source": "true", "gain": sol.K.tolist(),
            "cost": cost}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        cmd = args.command
        if cmd == "simulate":
            report = _cmd_simulate(cfg)
        elif cmd == "train-pinn":
            report = _cmd_benchmark(cfg, "forward-pinn")
        elif cmd == "train-node":
            exp = "forward-noise" if float(cfg.get("sigma", 0) or 0) > 0 else "forward-node"
            report = _cmd_benchmark(cfg, exp)
        elif cmd == "identify-dp":
            report = _cmd_benchmark(cfg, "inverse-dp")
        elif cmd == "identify-pinn":
            report = _cmd_benchmark(cfg, "inverse-pinn")
        elif cmd == "lqr-run":
            report = _cmd_lqr_run(cfg)
        elif cmd == "benchmark":
            report = _cmd_benchmark(cfg, args.experiment)
        else:  # pragma: no cover
            raise ValueError(f"unknown command {cmd!r}")
    except Exception as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr)
        sys.stderr.write("\n")
        return 1
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
