"""Neural-ODE learning of the state tendency field.

The network maps (delta, omega) — optionally plus a control input — to the
state derivative; training integrates it with fixed-step RK4 over short
trajectory segments and matches the observations (discretize-then-optimize:
the gradient is exactly the gradient of the computed discrete map).

Training gradients come from a hand-written vector-Jacobian pass through
the RK4 stages, vectorized over the segment batch; the tests pin it
against the scalar tape and finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mlp
from .integrate import BlowUpError
from .optim import Adam
from .smib import LinearModel, State
from .trajectory import Trajectory

__all__ = [
    "NodeTrainConfig",
    "NodeModel",
    "NodeResult",
    "rollout",
    "segment_loss",
    "loss_and_grad",
    "train_node",
    "node_linearize",
]


@dataclass
class NodeTrainConfig:
    n_b: int = 100
    m: int = 10
    dt: float = 0.02
    epochs: int = 1000
    lr: float = 1e-3
    control_conditioned: bool = False

    def __post_init__(self) -> None:
        if self.m < 1 or self.n_b < 1 or self.dt <= 0:
            raise ValueError("need m >= 1, n_b >= 1, dt > 0")


@dataclass
class NodeModel:
    net: mlp.MlpParams

    @property
    def control_conditioned(self) -> bool:
        return self.net.config.input_dim == 3

    def __post_init__(self) -> None:
        if self.net.config.output_dim != 2:
            raise ValueError("tendency net must output 2 components")
        if self.net.config.input_dim not in (2, 3):
            raise ValueError("tendency net takes (delta, omega[, u])")


def _net_inputs(X: np.ndarray, U) -> np.ndarray:
    if U is None:
        return X
    return np.concatenate([X, np.broadcast_to(U, (X.shape[0], 1))], axis=1)


def _f_batch(params: mlp.MlpParams, X: np.ndarray, U):
    Y, hs = mlp.forward_batch(params, _net_inputs(X, U))
    return Y, hs


def rollout_batch(params: mlp.MlpParams, X0: np.ndarray, U, m: int, dt: float):
    """m RK4 steps of the learned field over a batch of initial states.

    Returns (preds of shape (m, n, 2), stage caches for the VJP).  ``U`` is
    None for autonomous nets or an (n, 1)-broadcastable array of controls
    held constant over the segment.
    """
    X = np.asarray(X0, dtype=float)
    preds = np.empty((m, *X.shape))
    caches = []
    for j in range(m):
        k1, c1 = _f_batch(params, X, U)
        X2 = X + (dt / 2.0) * k1
        k2, c2 = _f_batch(params, X2, U)
        X3 = X + (dt / 2.0) * k2
        k3, c3 = _f_batch(params, X3, U)
        X4 = X + dt * k3
        k4, c4 = _f_batch(params, X4, U)
        X = X + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.all(np.isfinite(X)):
            raise BlowUpError(dt * (j + 1))
        preds[j] = X
        caches.append((c1, c2, c3, c4))
    return preds, caches


def rollout_vjp(params: mlp.MlpParams, caches, G_preds: np.ndarray, dt: float):
    """Backprop of sum(G_preds * preds) through the RK4 rollout.

    Returns the gradient with respect to the flattened net parameters.
    """
    n_state = 2
    gW_acc = [np.zeros_like(W) for W in params.weights]
    gb_acc = [np.zeros_like(b) for b in params.biases]

    def stage_vjp(cache, gk):
        gWs, gbs, gin = mlp.vjp_batch(params, cache, gk)
        for acc, g in zip(gW_acc, gWs):
            acc += g
        for acc, g in zip(gb_acc, gbs):
            acc += g
        return gin[:, :n_state]  # control column carries no trained weight

    gX = np.zeros_like(G_preds[0])
    for j in range(len(caches) - 1, -1, -1):
        gXn = G_preds[j] + gX
        c1, c2, c3, c4 = caches[j]
        gk4 = (dt / 6.0) * gXn
        gin4 = stage_vjp(c4, gk4)
        gk3 = (dt / 3.0) * gXn + dt * gin4
        gin3 = stage_vjp(c3, gk3)
        gk2 = (dt / 3.0) * gXn + (dt / 2.0) * gin3
        gin2 = stage_vjp(c2, gk2)
        gk1 = (dt / 6.0) * gXn + (dt / 2.0) * gin2
        gin1 = stage_vjp(c1, gk1)
        gX = gXn + gin1 + gin2 + gin3 + gin4
    flat = []
    for gW, gb in zip(gW_acc, gb_acc):
        flat.append(gW.ravel())
        flat.append(gb)
    return np.concatenate(flat)


def rollout(model: NodeModel, x0: State, u, steps: int, dt: float) -> Trajectory:
    """Plain (non-traced) rollout from one initial state."""
    X0 = x0.as_array()[None, :]
    U = None if u is None else np.array([[float(u)]])
    if steps == 0:
        return Trajectory(np.array([0.0]), X0.copy())
    preds, _ = rollout_batch(model.net, X0, U, steps, dt)
    states = np.vstack([X0, preds[:, 0, :]])
    return Trajectory(dt * np.arange(steps + 1), states)


def segment_loss(preds: np.ndarray, targets: np.ndarray) -> float:
    """(1/(n_b m)) sum of squared prediction errors over the batch."""
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape:
        raise ValueError("prediction/target shape mismatch")
    m, n_b = preds.shape[0], preds.shape[1]
    return float(np.sum((preds - targets) ** 2) / (n_b * m))


def loss_and_grad(params: mlp.MlpParams, X0: np.ndarray, U, targets: np.ndarray, dt: float):
    """Segment loss and its gradient w.r.t. the flat parameter vector."""
    m, n_b = targets.shape[0], targets.shape[1]
    preds, caches = rollout_batch(params, X0, U, m, dt)
    diff = preds - targets
    loss = float(np.sum(diff * diff) / (n_b * m))
    G = (2.0 / (n_b * m)) * diff
    return loss, rollout_vjp(params, caches, G, dt)


@dataclass
class NodeResult:
    model: NodeModel
    loss_history: np.ndarray


def train_node(
    datasets: list[tuple[Trajectory, float | None]],
    cfg: NodeTrainConfig,
    seed: int,
    net_cfg: mlp.MlpConfig | None = None,
) -> NodeResult:
    """Adam loop over randomly sampled trajectory segments.

    ``datasets`` pairs each observation trajectory with its (constant)
    control value, or None in the autonomous case.  Segments are pooled
    uniformly over all valid (trajectory, start) pairs, with replacement.
    """
    if net_cfg is None:
        d_in = 3 if cfg.control_conditioned else 2
        net_cfg = mlp.MlpConfig(d_in, 2, hidden=mlp.DEFAULT_HIDDEN)
    if cfg.control_conditioned and net_cfg.input_dim != 3:
        raise ValueError("control-conditioned training needs a 3-input net")
    ss = np.random.SeedSequence(seed)
    init_ss, sample_ss = ss.spawn(2)
    params = mlp.init(net_cfg, init_ss)
    rng = np.random.default_rng(sample_ss)

    pool = []  # (dataset index, start index)
    for di, (traj, _) in enumerate(datasets):
        hi = len(traj) - cfg.m
        if hi < 1:
            raise ValueError("segment length exceeds a training trajectory")
        pool.extend((di, s) for s in range(hi))
    pool = np.array(pool)

    flat = params.flatten()
    opt = Adam(flat.size, cfg.lr)
    losses = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        pick = pool[rng.integers(0, len(pool), size=cfg.n_b)]
        X0 = np.empty((cfg.n_b, 2))
        targets = np.empty((cfg.m, cfg.n_b, 2))
        U = np.empty((cfg.n_b, 1)) if cfg.control_conditioned else None
        for row, (di, s) in enumerate(pick):
            traj, u = datasets[di]
            X0[row] = traj.states[s]
            targets[:, row, :] = traj.states[s + 1:s + cfg.m + 1]
            if U is not None:
                U[row, 0] = u
        params = mlp.MlpParams.from_flat(net_cfg, flat)
        loss, grad = loss_and_grad(params, X0, U, targets, cfg.dt)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss at epoch {epoch}; recent losses: "
                f"{losses[max(0, epoch - 5):epoch]}"
            )
        flat = opt.step(flat, grad)
        losses[epoch] = loss
    params = mlp.MlpParams.from_flat(net_cfg, flat)
    return NodeResult(NodeModel(params), losses)


def node_linearize(model: NodeModel, x_star: State, u_star: float) -> LinearModel:
    """Small-signal (A, B) from the Jacobian of the learned field."""
    if not model.control_conditioned:
        raise ValueError("linearization for control needs a control-conditioned net")
    J = mlp.input_jacobian(model.net, np.array([x_star.delta, x_star.omega, u_star]))
    return LinearModel(J[:, :2].copy(), J[:, 2].copy(), x_star)
