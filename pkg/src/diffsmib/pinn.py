"""Physics-informed training of the solution map x_hat(t).

The network maps the time coordinate to the state; the loss penalizes
swing-equation residuals at random collocation points, plus optional data
and initial-condition terms.  The time derivative of the network comes
from forward-mode duals.  In inverse mode the inertia and damping enter as
softplus-constrained learnable scalars updated together with the weights.

As elsewhere, a generic scalar route exists for auditable gradients and a
vectorized numpy route powers the training loop; the tests tie the two
together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mlp
from .autodiff import Dual, sigmoid, softplus, softplus_inverse
from .optim import Adam
from .smib import SmibParams, State, swing_field
from .trajectory import Trajectory

__all__ = [
    "PinnConfig",
    "PinnModel",
    "PinnResult",
    "physics_loss",
    "total_loss",
    "total_loss_and_grad",
    "physics_loss_scalars",
    "train_pinn",
    "predict",
]


@dataclass
class PinnConfig:
    n_c: int = 1000
    lambda_d: float = 0.0
    lambda_i: float = 2.0
    epochs: int = 20000
    lr: float = 1e-3
    t_domain: tuple[float, float] = (0.0, 10.0)

    def __post_init__(self) -> None:
        if self.n_c < 1:
            raise ValueError("need at least one collocation point")
        if self.lambda_d < 0 or self.lambda_i < 0:
            raise ValueError("loss weights must be non-negative")
        if self.t_domain[1] <= self.t_domain[0]:
            raise ValueError("need t1 > t0")


@dataclass
class PinnModel:
    net: mlp.MlpParams
    theta_m_raw: float | None = None  # softplus-constrained learnables
    theta_d_raw: float | None = None

    def __post_init__(self) -> None:
        if self.net.config.input_dim != 1 or self.net.config.output_dim != 2:
            raise ValueError("solution-map net must be 1 -> 2")

    @property
    def identifies(self) -> bool:
        return self.theta_m_raw is not None

    @property
    def theta_m(self) -> float | None:
        return None if self.theta_m_raw is None else softplus(self.theta_m_raw)

    @property
    def theta_d(self) -> float | None:
        return None if self.theta_d_raw is None else softplus(self.theta_d_raw)

    def effective_md(self, p: SmibParams) -> tuple[float, float]:
        if self.identifies:
            return softplus(self.theta_m_raw), softplus(self.theta_d_raw)
        return p.M, p.D


def predict(model: PinnModel, times) -> Trajectory:
    """Evaluate the solution map on a time grid."""
    times = np.asarray(times, dtype=float)
    states = mlp.forward(model.net, times[:, None])
    return Trajectory(times, states)


def _residual_pieces(model: PinnModel, p: SmibParams, ts: np.ndarray):
    ts = np.asarray(ts, dtype=float)
    X = ts[:, None]
    Y, Yd, cache = mlp.dual_forward_batch(model.net, X, np.ones_like(X))
    M, D = model.effective_md(p)
    F = np.empty_like(Y)
    F[:, 0] = Y[:, 1]
    F[:, 1] = (p.Pm - p.b * np.sin(Y[:, 0]) - D * Y[:, 1]) / M
    R = Yd - F
    return Y, Yd, cache, F, R, M, D


def physics_loss(model: PinnModel, p: SmibParams, collocation) -> float:
    """Mean over collocation points of the squared dynamics residual."""
    _, _, _, _, R, _, _ = _residual_pieces(model, p, np.asarray(collocation))
    return float(np.sum(R * R) / len(R))


def total_loss(
    model: PinnModel,
    p: SmibParams,
    collocation,
    data: Trajectory | None,
    x0: State,
    cfg: PinnConfig,
) -> float:
    """physics + lambda_d * data mismatch + lambda_i * initial-condition term."""
    loss = physics_loss(model, p, collocation)
    if cfg.lambda_d > 0.0 and data is not None and len(data) > 0:
        pred = mlp.forward(model.net, data.times[:, None])
        loss += cfg.lambda_d * float(np.sum((pred - data.states) ** 2) / len(data))
    if cfg.lambda_i > 0.0:
        pred0 = mlp.forward(model.net, np.array([cfg.t_domain[0]]))
        loss += cfg.lambda_i * float(np.sum((pred0 - x0.as_array()) ** 2))
    return loss


def total_loss_and_grad(
    model: PinnModel,
    p: SmibParams,
    collocation: np.ndarray,
    data: Trajectory | None,
    x0: State,
    cfg: PinnConfig,
):
    """Loss and gradient w.r.t. (flat net params, raw theta pair).

    The physics term backpropagates through the dual (value, tangent)
    forward pass; data and initial-condition terms use the plain pass.
    Returns (loss, net gradient flat, raw-theta gradient array(2)).
    """
    ts = np.asarray(collocation, dtype=float)
    n_c = len(ts)
    Y, Yd, cache, F, R, M, D = _residual_pieces(model, p, ts)
    loss = float(np.sum(R * R) / n_c)

    GYd = (2.0 / n_c) * R
    GF = -GYd
    GY = np.empty_like(Y)
    GY[:, 0] = GF[:, 1] * (-p.b * np.cos(Y[:, 0]) / M)
    GY[:, 1] = GF[:, 0] + GF[:, 1] * (-D / M)
    gWs, gbs, _, _ = mlp.dual_vjp_batch(model.net, cache, GY, GYd)

    g_raw = np.zeros(2)
    if model.identifies:
        gM = float(np.sum(GF[:, 1] * (-F[:, 1] / M)))
        gD = float(np.sum(GF[:, 1] * (-Y[:, 1] / M)))
        g_raw[0] = gM * sigmoid(model.theta_m_raw)
        g_raw[1] = gD * sigmoid(model.theta_d_raw)

    def add_plain(ts_pts: np.ndarray, targets: np.ndarray, weight: float, denom: float):
        nonlocal loss
        pred, hs = mlp.forward_batch(model.net, ts_pts[:, None])
        diff = pred - targets
        loss += weight * float(np.sum(diff * diff) / denom)
        G = (2.0 * weight / denom) * diff
        for acc_w, acc_b, (gw, gb) in zip(gWs, gbs, zip(*mlp.vjp_batch(model.net, hs, G)[:2])):
            acc_w += gw
            acc_b += gb

    if cfg.lambda_d > 0.0 and data is not None and len(data) > 0:
        add_plain(data.times, data.states, cfg.lambda_d, float(len(data)))
    if cfg.lambda_i > 0.0:
        add_plain(np.array([cfg.t_domain[0]]), x0.as_array()[None, :], cfg.lambda_i, 1.0)

    flat = []
    for gW, gb in zip(gWs, gbs):
        flat.append(gW.ravel())
        flat.append(gb)
    return loss, np.concatenate(flat), g_raw


# generic-scalar route -----------------------------------------------------


def physics_loss_scalars(layers, theta_m, theta_d, p: SmibParams, ts):
    """Physics residual loss on any scalar kind (weights may be traced).

    ``theta_m``/``theta_d`` are the physical values (already softplus-mapped,
    possibly traced); pass ``p.M, p.D`` for the forward problem.
    """
    total = 0.0
    for t in ts:
        out = mlp.forward_scalars(layers, [Dual(float(t), 1.0)])
        x_hat = tuple(o.primal for o in out)
        x_dot = tuple(o.tangent for o in out)
        f = swing_field(theta_m, theta_d, p.b, x_hat, p.Pm)
        for d, fk in zip(x_dot, f):
            r = d - fk
            total = total + r * r
    return total / len(ts)


def total_loss_scalars(layers, theta_m, theta_d, p, ts, data, x0, cfg: PinnConfig):
    loss = physics_loss_scalars(layers, theta_m, theta_d, p, ts)
    if cfg.lambda_d > 0.0 and data is not None and len(data) > 0:
        acc = 0.0
        for t, target in zip(data.times, data.states):
            out = mlp.forward_scalars(layers, [float(t)])
            for o, v in zip(out, target):
                d = o - v
                acc = acc + d * d
        loss = loss + (cfg.lambda_d / len(data)) * acc
    if cfg.lambda_i > 0.0:
        out = mlp.forward_scalars(layers, [float(cfg.t_domain[0])])
        acc = 0.0
        for o, v in zip(out, x0.as_tuple()):
            d = o - v
            acc = acc + d * d
        loss = loss + cfg.lambda_i * acc
    return loss


@dataclass
class PinnResult:
    model: PinnModel
    loss_history: np.ndarray
    theta_m_history: np.ndarray | None = None
    theta_d_history: np.ndarray | None = None


def train_pinn(
    p: SmibParams,
    data: Trajectory | None,
    x0: State,
    cfg: PinnConfig,
    seed: int,
    identify: bool = False,
    net_cfg: mlp.MlpConfig | None = None,
    initial_raw: float = 0.0,
) -> PinnResult:
    """Adam loop; collocation points are resampled uniformly every epoch.

    ``data`` is only consulted when ``cfg.lambda_d > 0``; it should already
    be restricted to the training window.  In inverse mode the raw
    learnables start at ``initial_raw`` (softplus(0) ~ 0.693).
    """
    if net_cfg is None:
        net_cfg = mlp.MlpConfig(1, 2, hidden=mlp.DEFAULT_HIDDEN)
    ss = np.random.SeedSequence(seed)
    init_ss, sample_ss = ss.spawn(2)
    params = mlp.init(net_cfg, init_ss)
    rng = np.random.default_rng(sample_ss)
    model = PinnModel(
        params,
        theta_m_raw=initial_raw if identify else None,
        theta_d_raw=initial_raw if identify else None,
    )
    n_net = net_cfg.n_params
    flat = params.flatten()
    raw = np.array([initial_raw, initial_raw]) if identify else np.zeros(0)
    opt = Adam(n_net + raw.size, cfg.lr)
    vec = np.concatenate([flat, raw])

    losses = np.empty(cfg.epochs)
    tm_hist = np.empty(cfg.epochs) if identify else None
    td_hist = np.empty(cfg.epochs) if identify else None
    t0, t1 = cfg.t_domain
    for epoch in range(cfg.epochs):
        model.net = mlp.MlpParams.from_flat(net_cfg, vec[:n_net])
        if identify:
            model.theta_m_raw = float(vec[n_net])
            model.theta_d_raw = float(vec[n_net + 1])
        ts = rng.uniform(t0, t1, size=cfg.n_c)
        loss, g_net, g_raw = total_loss_and_grad(model, p, ts, data, x0, cfg)
        if not math.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss at epoch {epoch}; recent losses: "
                f"{losses[max(0, epoch - 5):epoch]}"
            )
        grad = np.concatenate([g_net, g_raw]) if identify else g_net
        vec = opt.step(vec, grad)
        losses[epoch] = loss
        if identify:
            tm_hist[epoch] = softplus(float(vec[n_net]))
            td_hist[epoch] = softplus(float(vec[n_net + 1]))
    model.net = mlp.MlpParams.from_flat(net_cfg, vec[:n_net])
    if identify:
        model.theta_m_raw = float(vec[n_net])
        model.theta_d_raw = float(vec[n_net + 1])
    return PinnResult(model, losses, tm_hist, td_hist)
