"""Differentiable-programming identification of inertia and damping.

The known-structure swing equation is integrated with learnable,
softplus-constrained parameters and the trajectory-matching loss is
backpropagated through the discrete solver.  With only two trainable
scalars, gradients come from forward-mode duals (one tangent seed per raw
parameter), vectorized over a batch of trajectory segments.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Dual, softplus, softplus_inverse
from .integrate import TimeGrid, fixed_step_path, rk4_step
from .optim import Adam
from .smib import SmibParams, State, swing_field
from .trajectory import Trajectory

__all__ = ["DpModel", "DpTrainConfig", "DpResult", "dp_rollout", "identify", "segment_starts"]


@dataclass
class DpModel:
    """Two raw trainable scalars plus the fixed plant constants."""

    theta_m_raw: float
    theta_d_raw: float
    E: float
    Vinf: float
    X: float
    Pm: float

    @classmethod
    def initial(cls, p: SmibParams, m0: float = 1.0, d0: float = 1.0) -> "DpModel":
        """Start from physical guesses (default M = D = 1)."""
        return cls(softplus_inverse(m0), softplus_inverse(d0), p.E, p.Vinf, p.X, p.Pm)

    @property
    def theta_m(self) -> float:
        return softplus(self.theta_m_raw)

    @property
    def theta_d(self) -> float:
        return softplus(self.theta_d_raw)

    @property
    def b(self) -> float:
        return self.E * self.Vinf / self.X

    def as_params(self) -> SmibParams:
        """Plant parameters with the current identified values."""
        return SmibParams(self.theta_m, self.theta_d, self.E, self.Vinf, self.X, self.Pm)


@dataclass
class DpTrainConfig:
    n_b: int = 100
    m: int = 10
    dt: float = 0.02
    epochs: int = 4000
    lr: float = 1e-2

    def __post_init__(self) -> None:
        if self.m < 1 or self.n_b < 1 or self.dt <= 0 or self.epochs < 0:
            raise ValueError("need m >= 1, n_b >= 1, dt > 0, epochs >= 0")


@dataclass
class DpResult:
    model: DpModel
    theta_m_history: np.ndarray
    theta_d_history: np.ndarray
    loss_history: np.ndarray


def dp_rollout(model: DpModel, x0: State, steps: int, dt: float) -> Trajectory:
    """Fixed-step RK4 integration of the swing equation at the current thetas."""
    if steps == 0:
        return Trajectory(np.array([0.0]), np.array([x0.as_tuple()]))
    f = lambda t, x, u: swing_field(model.theta_m, model.theta_d, model.b, x, model.Pm)
    grid = TimeGrid(0.0, steps * dt, dt)
    path = fixed_step_path(f, x0.as_tuple(), grid)
    return Trajectory(grid.times(), np.array(path, dtype=float))


def segment_starts(n_samples: int, m: int, n_b: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform-with-replacement start indices for n_b segments of length m."""
    hi = n_samples - m
    if hi < 1:
        raise ValueError("segment length exceeds the data window")
    return rng.integers(0, hi, size=n_b)


def _batched_loss(theta_m, theta_d, b, pm, x0: np.ndarray, targets: np.ndarray, dt: float):
    """Segment loss over a batch; scalar kind of the thetas flows through.

    x0 is (n_b, 2), targets is (m, n_b, 2).  Returns the mean-squared loss
    in the same scalar kind as the thetas.
    """
    f = lambda t, x, u: swing_field(theta_m, theta_d, b, x, pm)
    x = (x0[:, 0], x0[:, 1])
    m = targets.shape[0]
    total = 0.0
    for j in range(m):
        x = rk4_step(f, j * dt, x, dt)
        for comp in range(2):
            diff = x[comp] - targets[j, :, comp]
            sq = diff * diff
            if isinstance(sq, Dual):
                total = total + Dual(np.sum(sq.primal), np.sum(sq.tangent))
            else:
                total = total + np.sum(sq)
    n_b = x0.shape[0]
    return total / (n_b * m)


def loss_and_grad(model: DpModel, data: Trajectory, starts: np.ndarray, m: int, dt: float):
    """Loss plus d(loss)/d(raw thetas) via two forward-mode passes."""
    idx = np.asarray(starts)
    x0 = data.states[idx]
    targets = np.stack([data.states[idx + j] for j in range(1, m + 1)])
    grads = np.zeros(2)
    loss = None
    for k, seed in enumerate(((1.0, 0.0), (0.0, 1.0))):
        tm = softplus(Dual(model.theta_m_raw, seed[0]))
        td = softplus(Dual(model.theta_d_raw, seed[1]))
        out = _batched_loss(tm, td, model.b, model.Pm, x0, targets, dt)
        grads[k] = out.tangent
        loss = out.primal
    return float(loss), grads


def identify(
    data: Trajectory,
    p: SmibParams,
    cfg: DpTrainConfig,
    seed: int,
    initial: DpModel | None = None,
) -> DpResult:
    """Adam loop on the segment loss; returns per-epoch parameter history.

    ``data`` are the (possibly noisy) observations on the training window;
    ``p`` supplies the fixed constants E, Vinf, X, Pm.
    """
    model = replace(initial) if initial is not None else DpModel.initial(p)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    opt = Adam(2, cfg.lr)
    raw = np.array([model.theta_m_raw, model.theta_d_raw])
    tm_hist = np.empty(cfg.epochs)
    td_hist = np.empty(cfg.epochs)
    losses = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        starts = segment_starts(len(data), cfg.m, cfg.n_b, rng)
        model.theta_m_raw, model.theta_d_raw = raw
        loss, grad = loss_and_grad(model, data, starts, cfg.m, cfg.dt)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss at epoch {epoch}; recent losses: "
                f"{losses[max(0, epoch - 5):epoch]}"
            )
        raw = opt.step(raw, grad)
        tm_hist[epoch] = softplus(float(raw[0]))
        td_hist[epoch] = softplus(float(raw[1]))
        losses[epoch] = loss
    model.theta_m_raw, model.theta_d_raw = raw
    return DpResult(model, tm_hist, td_hist, losses)
