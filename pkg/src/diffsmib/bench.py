"""Scenario registry, noise injection, metrics, and experiment orchestration.

Every experiment is fully determined by (experiment id, seeds, overrides):
all randomness flows from a single per-trial seed through fixed-purpose
SeedSequence splits, and artifacts are written with lossless float
formatting, so reruns produce byte-identical CSVs.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__, dpident, lqr, mlp, node, pinn
from .integrate import IntegratorConfig, TimeGrid, integrate
from .smib import SmibParams, State, equilibrium, linearize, vector_field
from .trajectory import Trajectory

__all__ = [
    "Scenario",
    "SCENARIOS",
    "EXPERIMENT_IDS",
    "NoiseModel",
    "add_noise",
    "rel_l2",
    "reference_trajectory",
    "run_experiment",
    "desk_net",
    "full_net",
]

# seed-split purposes (stable, never reorder)
_SPLIT_NOISE = 1
_SPLIT_TRAIN = 2


@dataclass(frozen=True)
class Scenario:
    name: str
    params: SmibParams
    x0: State
    grid: TimeGrid
    train_window: tuple[float, float]
    pm_values: tuple[float, ...] | None = None  # control-conditioned datasets


def _grid() -> TimeGrid:
    return TimeGrid(0.0, 20.0, 0.02)


SCENARIOS: dict[str, Scenario] = {
    "stable": Scenario(
        "stable",
        SmibParams(M=0.4, D=0.2, E=1.0, Vinf=1.0, X=5.0, Pm=0.1),
        State(0.1, 0.1),
        _grid(),
        (0.0, 10.0),
    ),
    "oscillatory": Scenario(
        "oscillatory",
        SmibParams(M=0.1, D=0.01, E=5.0, Vinf=1.0, X=5.0, Pm=0.5),
        State(0.1, 0.1),
        _grid(),
        (0.0, 10.0),
    ),
    "control-node": Scenario(
        "control-node",
        SmibParams(M=0.2, D=0.1, E=1.0, Vinf=1.0, X=2.0, Pm=0.3),
        State(0.1, 0.1),
        _grid(),
        (0.0, 10.0),
        pm_values=(0.1, 0.2, 0.3, 0.4),
    ),
    "control-dp": Scenario(
        "control-dp",
        SmibParams(M=0.1, D=0.01, E=5.0, Vinf=1.0, X=5.0, Pm=0.5),
        State(0.1, 0.1),
        _grid(),
        (0.0, 10.0),
    ),
}

EXPERIMENT_IDS = (
    "forward-node",
    "forward-pinn",
    "forward-noise",
    "inverse-dp",
    "inverse-pinn",
    "lambda-sweep",
    "lqr-dp",
    "lqr-node",
)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    seed: int

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def add_noise(traj: Trajectory, nm: NoiseModel) -> Trajectory:
    """Multiplicative Gaussian noise x(1+eps), i.i.d. per component per sample."""
    if nm.sigma == 0.0:
        return Trajectory(traj.times.copy(), traj.states.copy(), dict(traj.meta))
    rng = np.random.default_rng(np.random.SeedSequence([nm.seed, _SPLIT_NOISE]))
    eps = rng.normal(0.0, nm.sigma, size=traj.states.shape)
    meta = dict(traj.meta)
    meta.update(sigma=nm.sigma, noise_seed=nm.seed, noise_draws="per-component")
    return Trajectory(traj.times.copy(), traj.states * (1.0 + eps), meta)


def rel_l2(pred, ref) -> float:
    """||pred - ref||_2 / ||ref||_2 over one state component series."""
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if pred.shape != ref.shape:
        raise ValueError("series length mismatch")
    denom = np.linalg.norm(ref)
    if denom == 0.0:
        raise ValueError("reference series has zero norm")
    return float(np.linalg.norm(pred - ref) / denom)


def reference_trajectory(sc: Scenario, pm: float | None = None) -> Trajectory:
    """Noise-free dopri5 reference at the scenario grid."""
    p = sc.params if pm is None else replace(sc.params, Pm=pm)
    traj = integrate(
        lambda t, x, u: vector_field(p, x),
        sc.x0.as_tuple(),
        sc.grid,
        IntegratorConfig(method="dopri5", rtol=1e-7, atol=1e-9, dt_init=0.01),
    )
    traj.meta.update(scenario=sc.name, sigma=0.0, pm=p.Pm)
    return traj


def desk_net(input_dim: int) -> mlp.MlpConfig:
    """Reduced architecture for desk-scale runs (minutes, not hours)."""
    return mlp.MlpConfig(input_dim, 2, hidden=(64, 64, 64))


def full_net(input_dim: int) -> mlp.MlpConfig:
    return mlp.MlpConfig(input_dim, 2, hidden=mlp.DEFAULT_HIDDEN)


# noise-study schedule: segment length -> epochs
_NOISE_EPOCHS = {10: 1000, 30: 2000, 60: 4000}


def _aggregate(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=float)
    return {
        "min": float(arr.min()),
        "average": float(arr.mean()),
        "max": float(arr.max()),
        "std": float(arr.std(ddof=0)),
    }


def _train_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, _SPLIT_TRAIN])


def _write_history(path, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    arrs = [np.asarray(columns[n]) for n in names]
    with open(path, "w") as fh:
        fh.write("epoch," + ",".join(names) + "\n")
        for i in range(len(arrs[0])):
            fh.write(str(i) + "," + ",".join("%.17g" % a[i] for a in arrs) + "\n")


def _node_forward_trial(sc: Scenario, sigma: float, seed: int, epochs: int, m: int,
                        lr: float, net_cfg: mlp.MlpConfig, out: "Path | None"):
    ref = reference_trajectory(sc)
    observed = add_noise(ref, NoiseModel(sigma, seed))
    train = observed.window(*sc.train_window)
    cfg = node.NodeTrainConfig(n_b=100, m=m, dt=sc.grid.dt_out, epochs=epochs, lr=lr)
    # train seed folded deterministically per trial
    res = node.train_node([(train, None)], cfg, int(_train_seed(seed).generate_state(1)[0]), net_cfg)
    x0 = State(*observed.states[0])
    pred = node.rollout(res.model, x0, None, sc.grid.n_intervals, sc.grid.dt_out)
    errs = {
        "delta": rel_l2(pred.delta, ref.delta),
        "omega": rel_l2(pred.omega, ref.omega),
    }
    if out is not None:
        pred.meta.update(scenario=sc.name, sigma=sigma, seed=seed, model="node")
        pred.to_csv(out / f"node_{sc.name}_sigma{sigma:g}_seed{seed}.csv")
        _write_history(out / f"node_{sc.name}_sigma{sigma:g}_seed{seed}_history.csv",
                       {"loss": res.loss_history})
    return errs, res


def _pinn_forward_trial(sc: Scenario, seed: int, epochs: int, lr: float,
                        lambda_d: float, net_cfg: mlp.MlpConfig, out):
    ref = reference_trajectory(sc)
    train = ref.window(*sc.train_window)
    cfg = pinn.PinnConfig(n_c=1000, lambda_d=lambda_d, lambda_i=2.0,
                          epochs=epochs, lr=lr, t_domain=sc.train_window)
    res = pinn.train_pinn(sc.params, train, sc.x0, cfg,
                          int(_train_seed(seed).generate_state(1)[0]),
                          identify=False, net_cfg=net_cfg)
    pred = pinn.predict(res.model, ref.times)
    errs = {
        "delta": rel_l2(pred.delta, ref.delta),
        "omega": rel_l2(pred.omega, ref.omega),
    }
    if out is not None:
        pred.meta.update(scenario=sc.name, seed=seed, model="pinn")
        pred.to_csv(out / f"pinn_{sc.name}_seed{seed}.csv")
        _write_history(out / f"pinn_{sc.name}_seed{seed}_history.csv",
                       {"loss": res.loss_history})
    return errs, res


def _identify_dp_trial(sc: Scenario, sigma: float, seed: int, cfg: dpident.DpTrainConfig, out):
    ref = reference_trajectory(sc)
    observed = add_noise(ref, NoiseModel(sigma, seed))
    train = observed.window(*sc.train_window)
    res = dpident.identify(train, sc.params, cfg,
                           int(_train_seed(seed).generate_state(1)[0]))
    errs = {
        "theta_M": abs(res.model.theta_m - sc.params.M) / sc.params.M,
        "theta_D": abs(res.model.theta_d - sc.params.D) / sc.params.D,
    }
    if out is not None:
        _write_history(out / f"dp_sigma{sigma:g}_seed{seed}_history.csv",
                       {"theta_M": res.theta_m_history,
                        "theta_D": res.theta_d_history,
                        "loss": res.loss_history})
    return errs, res


def _identify_pinn_trial(sc: Scenario, sigma: float, seed: int, cfg: pinn.PinnConfig,
                         net_cfg: mlp.MlpConfig, out):
    ref = reference_trajectory(sc)
    observed = add_noise(ref, NoiseModel(sigma, seed))
    train = observed.window(*sc.train_window)
    res = pinn.train_pinn(sc.params, train, State(*observed.states[0]), cfg,
                          int(_train_seed(seed).generate_state(1)[0]),
                          identify=True, net_cfg=net_cfg)
    errs = {
        "theta_M": abs(res.model.theta_m - sc.params.M) / sc.params.M,
        "theta_D": abs(res.model.theta_d - sc.params.D) / sc.params.D,
    }
    if out is not None:
        _write_history(
            out / f"pinn_inverse_sigma{sigma:g}_lambda{cfg.lambda_d:g}_seed{seed}_history.csv",
            {"theta_M": res.theta_m_history,
             "theta_D": res.theta_d_history,
             "loss": res.loss_history})
    return errs, res


def run_lqr_dp(theta_m: float = 0.1003, theta_d: float = 0.0124, out=None):
    """True-gain vs identified-gain closed loops on the oscillatory plant."""
    sc = SCENARIOS["control-dp"]
    p = sc.params
    xs = equilibrium(p)
    cfg = lqr.LqrConfig()
    sched = lqr.DisturbanceSchedule(0.1, (1.0, 2.0), 5.0)
    sol_true = lqr.solve_care(linearize(p, xs), cfg)
    p_hat = replace(p, M=theta_m, D=theta_d)
    sol_dp = lqr.solve_care(linearize(p_hat, equilibrium(p_hat)), cfg)
    run_true = lqr.closed_loop_simulate(p, xs, sol_true, sched, sc.grid, x0=xs)
    run_dp = lqr.closed_loop_simulate(p, xs, sol_dp, sched, sc.grid, x0=xs)
    result = {
        "theta_M": theta_m,
        "theta_D": theta_d,
        "delta_discrepancy": rel_l2(run_dp.trajectory.delta, run_true.trajectory.delta),
        "omega_discrepancy": rel_l2(run_dp.trajectory.omega, run_true.trajectory.omega),
        "cost_true": lqr.quadratic_cost(run_true.trajectory, run_true.u, xs, p.Pm, cfg),
        "cost_dp": lqr.quadratic_cost(run_dp.trajectory, run_dp.u, xs, p.Pm, cfg),
    }
    if out is not None:
        run_true.to_csv(out / "lqr_dp_true_gain.csv")
        run_dp.to_csv(out / "lqr_dp_identified_gain.csv")
    return result, run_true, run_dp


def run_lqr_node(seed: int, epochs: int = 2000, net_cfg: mlp.MlpConfig | None = None, out=None):
    """Control-conditioned NODE, Jacobian-based gain, closed-loop recovery."""
    sc = SCENARIOS["control-node"]
    net_cfg = net_cfg or desk_net(3)
    datasets = [
        (reference_trajectory(sc, pm).window(*sc.train_window), pm)
        for pm in sc.pm_values
    ]
    cfg = node.NodeTrainConfig(n_b=100, m=10, dt=sc.grid.dt_out, epochs=epochs,
                               lr=1e-3, control_conditioned=True)
    res = node.train_node(datasets, cfg, int(_train_seed(seed).generate_state(1)[0]), net_cfg)
    p = sc.params
    xs = equilibrium(p)
    lm_true = linearize(p, xs)
    lm_node = node.node_linearize(res.model, xs, p.Pm)
    sol = lqr.solve_care(lm_node, lqr.LqrConfig())
    sched = lqr.DisturbanceSchedule(0.1, (1.0, 2.0), 2.0)
    run = lqr.closed_loop_simulate(p, xs, sol, sched, sc.grid, x0=xs)
    dev = np.max(np.abs(run.trajectory.states - xs.as_array()), axis=1)
    after = run.trajectory.times >= 4.0
    result = {
        "A_error": float(np.max(np.abs(lm_node.A - lm_true.A))),
        "B_error_rel": float(abs(lm_node.B[1] - lm_true.B[1]) / lm_true.B[1]),
        "max_deviation_after_t4": float(dev[after].max()),
        "settling_time_0p01": float(
            run.trajectory.times[np.where(dev >= 0.01)[0][-1]]
            if np.any(dev >= 0.01) else 0.0
        ),
    }
    if out is not None:
        run.to_csv(out / f"lqr_node_seed{seed}.csv")
    return result, res, lm_node, run


def run_experiment(experiment: str, seeds: list[int], overrides: dict | None = None,
                   out_dir=None, full: bool = False) -> dict:
    """Reproduction driver for the benchmark tables and figures.

    Returns the manifest dict; when ``out_dir`` is given, writes trajectory
    and history CSVs plus ``manifest.json`` there.
    """
    from pathlib import Path

    if experiment not in EXPERIMENT_IDS:
        raise ValueError(f"unknown experiment {experiment!r}; choose from {EXPERIMENT_IDS}")
    if not seeds:
        raise ValueError("at least one seed is required")
    ov = dict(overrides or {})
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    t_start = time.time()
    per_seed: dict[str, list[float]] = {}
    config: dict = {"full": full}

    def record(errs: dict) -> None:
        for k, v in errs.items():
            per_seed.setdefault(k, []).append(float(v))

    if experiment == "forward-node":
        sc = SCENARIOS[ov.get("scenario", "stable")]
        epochs = int(ov.get("epochs", 1000 if sc.name == "stable" else 2000))
        m = int(ov.get("m", 10))
        lr = float(ov.get("lr", 1e-3))
        net = full_net(2) if full else desk_net(2)
        config.update(scenario=sc.name, epochs=epochs, m=m, lr=lr, hidden=list(net.hidden))
        for s in seeds:
            errs, _ = _node_forward_trial(sc, 0.0, s, epochs, m, lr, net, out)
            record(errs)

    elif experiment == "forward-pinn":
        sc = SCENARIOS[ov.get("scenario", "stable")]
        epochs = int(ov.get("epochs", 20000 if not full
                             else (100000 if sc.name == "stable" else 200000)))
        lr = float(ov.get("lr", 1e-3))
        lambda_d = float(ov.get("lambda_d", 0.0))
        net = full_net(1) if full else desk_net(1)
        config.update(scenario=sc.name, epochs=epochs, lr=lr, lambda_d=lambda_d,
                      hidden=list(net.hidden))
        for s in seeds:
            errs, _ = _pinn_forward_trial(sc, s, epochs, lr, lambda_d, net, out)
            record(errs)

    elif experiment == "forward-noise":
        sc = SCENARIOS[ov.get("scenario", "oscillatory")]
        sigma = float(ov.get("sigma", 0.05))
        m = int(ov.get("m", 60))
        epochs = int(ov.get("epochs", _NOISE_EPOCHS.get(m, 2000)))
        lr = float(ov.get("lr", 1e-3))
        net = full_net(2) if full else desk_net(2)
        config.update(scenario=sc.name, sigma=sigma, epochs=epochs, m=m, lr=lr,
                      hidden=list(net.hidden))
        for s in seeds:
            errs, _ = _node_forward_trial(sc, sigma, s, epochs, m, lr, net, out)
            record(errs)

    elif experiment == "inverse-dp":
        sc = SCENARIOS["oscillatory"]
        sigma = float(ov.get("sigma", 0.0))
        cfg = dpident.DpTrainConfig(
            n_b=int(ov.get("n_b", 100)),
            m=int(ov.get("m", 10)),
            dt=sc.grid.dt_out,
            epochs=int(ov.get("epochs", 4000)),
            lr=float(ov.get("lr", 1e-2)),
        )
        config.update(scenario=sc.name, sigma=sigma, epochs=cfg.epochs, m=cfg.m, lr=cfg.lr)
        for s in seeds:
            errs, _ = _identify_dp_trial(sc, sigma, s, cfg, out)
            record(errs)

    elif experiment == "inverse-pinn":
        sc = SCENARIOS["oscillatory"]
        sigma = float(ov.get("sigma", 0.0))
        cfg = pinn.PinnConfig(
            n_c=int(ov.get("n_c", 1000)),
            lambda_d=float(ov.get("lambda_d", 1.0)),
            lambda_i=2.0,
            epochs=int(ov.get("epochs", 20000)),
            lr=float(ov.get("lr", 1e-3)),
            t_domain=sc.train_window,
        )
        net = full_net(1) if full else desk_net(1)
        config.update(scenario=sc.name, sigma=sigma, epochs=cfg.epochs,
                      lambda_d=cfg.lambda_d, lr=cfg.lr, hidden=list(net.hidden))
        for s in seeds:
            errs, _ = _identify_pinn_trial(sc, sigma, s, cfg, net, out)
            record(errs)

    elif experiment == "lambda-sweep":
        sc = SCENARIOS["oscillatory"]
        lambdas = ov.get("lambdas", (0.0, 0.1, 0.5, 1.0))
        epochs = int(ov.get("epochs", 20000))
        dp_epochs = int(ov.get("dp_epochs", 10000))
        net = full_net(1) if full else desk_net(1)
        config.update(scenario=sc.name, lambdas=list(lambdas), epochs=epochs,
                      dp_epochs=dp_epochs, lr=1e-3, hidden=list(net.hidden))
        for s in seeds:
            for lam in lambdas:
                cfg = pinn.PinnConfig(n_c=1000, lambda_d=float(lam), lambda_i=2.0,
                                      epochs=epochs, lr=1e-3, t_domain=sc.train_window)
                errs, _ = _identify_pinn_trial(sc, 0.0, s, cfg, net, out)
                for k, v in errs.items():
                    per_seed.setdefault(f"pinn_lambda{lam:g}_{k}", []).append(float(v))
            dp_cfg = dpident.DpTrainConfig(epochs=dp_epochs, lr=1e-3, m=10,
                                           dt=sc.grid.dt_out)
            errs, _ = _identify_dp_trial(sc, 0.0, s, dp_cfg, out)
            for k, v in errs.items():
                per_seed.setdefault(f"dp_{k}", []).append(float(v))

    elif experiment == "lqr-dp":
        theta_m = float(ov.get("theta_m", 0.1003))
        theta_d = float(ov.get("theta_d", 0.0124))
        config.update(theta_m=theta_m, theta_d=theta_d)
        result, _, _ = run_lqr_dp(theta_m, theta_d, out)
        for k in ("delta_discrepancy", "omega_discrepancy", "cost_true", "cost_dp"):
            per_seed.setdefault(k, []).append(result[k])

    elif experiment == "lqr-node":
        epochs = int(ov.get("epochs", 2000))
        net = full_net(3) if full else desk_net(3)
        config.update(epochs=epochs, hidden=list(net.hidden))
        for s in seeds:
            result, _, _, _ = run_lqr_node(s, epochs, net, out)
            record(result)

    aggregates = {k: _aggregate(v) for k, v in per_seed.items()}
    manifest = {
        "experiment": experiment,
        "seeds": list(seeds),
        "config": config,
        "per_seed": per_seed,
        "aggregates": aggregates,
        "version": __version__,
        "wall_time_s": time.time() - t_start,
    }
    if out is not None:
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
    return manifest
