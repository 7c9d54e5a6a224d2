"""Fully connected tanh network usable under plain or traced scalars.

Serves as the PINN solution map (t -> state) and the NODE tendency field
(state[, control] -> derivative).  Two evaluation routes exist:

* :func:`forward_scalars` runs the net on any scalar kind (floats,
  TracedScalars, Duals) with the weights given as nested scalar lists;
  :func:`trace_params` lifts a parameter set onto a tape for reverse-mode
  gradients.  This route is exact and auditable but scalar-slow, and is
  what the gradient-fidelity tests exercise.
* :func:`forward_batch` / :func:`vjp_batch` (and the dual-carrying
  variants) are numpy-vectorized over a batch of inputs with hand-written
  backprop.  Training uses these; the tests pin them against the tape.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Dual, Tape, tanh

__all__ = [
    "MlpConfig",
    "MlpParams",
    "init",
    "forward",
    "forward_scalars",
    "trace_params",
    "input_jacobian",
    "forward_batch",
    "vjp_batch",
    "dual_forward_batch",
    "dual_vjp_batch",
    "save_checkpoint",
    "load_checkpoint",
]

DEFAULT_HIDDEN = (200, 150, 100, 50)


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    activation: str = "tanh"

    def __post_init__(self) -> None:
        dims = (self.input_dim, self.output_dim, *self.hidden)
        if any(d < 1 for d in dims):
            raise ValueError("all layer dims must be >= 1")
        if self.activation != "tanh":
            raise ValueError("only tanh activation is supported")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_params(self) -> int:
        dims = self.layer_dims
        return sum((dims[i] + 1) * dims[i + 1] for i in range(len(dims) - 1))


@dataclass
class MlpParams:
    """Per-layer weight matrices (n_out, n_in) and bias vectors (n_out,)."""

    config: MlpConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flatten(self) -> np.ndarray:
        """Stable layout: W0.ravel(), b0, W1.ravel(), b1, ..."""
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, config: MlpConfig, flat: np.ndarray) -> "MlpParams":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (config.n_params,):
            raise ValueError(
                f"expected {config.n_params} parameters, got {flat.shape}"
            )
        dims = config.layer_dims
        weights, biases, pos = [], [], 0
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            weights.append(flat[pos:pos + n_in * n_out].reshape(n_out, n_in).copy())
            pos += n_in * n_out
            biases.append(flat[pos:pos + n_out].copy())
            pos += n_out
        return cls(config, weights, biases)

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.config,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
        )


def init(cfg: MlpConfig, seed: int) -> MlpParams:
    """Glorot-uniform weights with zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    dims = cfg.layer_dims
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MlpParams(cfg, weights, biases)


# vectorized evaluation ---------------------------------------------------


def forward(params: MlpParams, x) -> np.ndarray:
    """Affine-tanh chain with a linear final layer; x is (d_in,) or (n, d_in)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != params.config.input_dim:
            raise ValueError("input dimension mismatch")
        return forward_batch(params, x[None, :])[0][0]
    return forward_batch(params, x)[0]


def forward_batch(params: MlpParams, X: np.ndarray):
    """Batched forward pass; returns (Y, hidden activations for the VJP)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.config.input_dim:
        raise ValueError("input dimension mismatch")
    hs = [X]
    h = X
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ W.T + b
        if i < last:
            h = np.tanh(a)
            hs.append(h)
        else:
            h = a
    return h, hs


def vjp_batch(params: MlpParams, hs: list[np.ndarray], GY: np.ndarray):
    """Backprop of sum(GY * Y): returns (weight grads, bias grads, GX)."""
    gWs = [None] * len(params.weights)
    gbs = [None] * len(params.biases)
    g = GY
    for i in range(len(params.weights) - 1, -1, -1):
        h_in = hs[i]
        gWs[i] = g.T @ h_in
        gbs[i] = g.sum(axis=0)
        g = g @ params.weights[i]
        if i > 0:
            g = g * (1.0 - hs[i] * hs[i])
    return gWs, gbs, g


def dual_forward_batch(params: MlpParams, X: np.ndarray, Xdot: np.ndarray):
    """Forward pass carrying a tangent direction per sample.

    Returns (Y, Ydot, cache); Ydot is the Jacobian-vector product of the net
    with the per-sample tangent Xdot (used for d x_hat/dt in the physics
    residual).
    """
    X = np.asarray(X, dtype=float)
    Xdot = np.asarray(Xdot, dtype=float)
    hs = [X]        # inputs to each layer (values)
    hdots = [Xdot]  # inputs to each layer (tangents)
    ads = [None]    # pre-activation tangents of hidden layers
    h, hd = X, Xdot
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ W.T + b
        ad = hd @ W.T
        if i < last:
            h = np.tanh(a)
            hd = (1.0 - h * h) * ad
            hs.append(h)
            hdots.append(hd)
            ads.append(ad)
        else:
            h, hd = a, ad
    return h, hd, (hs, hdots, ads)


def dual_vjp_batch(params: MlpParams, cache, GY: np.ndarray, GYdot: np.ndarray):
    """Backprop of sum(GY * Y + GYdot * Ydot) through the dual forward pass.

    For a hidden layer with value h = tanh(a), tangent d = (1 - h^2) ad:
    the pre-activation gradients are ga = s (g - 2 h ad gd) and gad = s gd
    with s = 1 - h^2 (the -2 h ad term is the derivative of s itself).
    """
    hs, hdots, ads = cache
    gWs = [None] * len(params.weights)
    gbs = [None] * len(params.biases)
    g, gd = GY, GYdot  # gradients w.r.t. the current layer's outputs
    for i in range(len(params.weights) - 1, -1, -1):
        if i < len(params.weights) - 1:
            h, ad = hs[i + 1], ads[i + 1]
            s = 1.0 - h * h
            ga = s * (g - 2.0 * h * ad * gd)
            gad = s * gd
        else:
            ga, gad = g, gd
        gWs[i] = ga.T @ hs[i] + gad.T @ hdots[i]
        gbs[i] = ga.sum(axis=0)
        g = ga @ params.weights[i]
        gd = gad @ params.weights[i]
    return gWs, gbs, g, gd


def save_checkpoint(path, params: MlpParams, seed: int | None = None, epoch: int | None = None) -> None:
    """JSON layout: config dims + seed/epoch header, flat parameter list.

    Python's json writes floats via repr, so the round-trip is exact.
    """
    payload = {
        "input_dim": params.config.input_dim,
        "output_dim": params.config.output_dim,
        "hidden": list(params.config.hidden),
        "activation": params.config.activation,
        "seed": seed,
        "epoch": epoch,
        "params": params.flatten().tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """Returns (MlpParams, header dict with seed/epoch)."""
    with open(path) as fh:
        payload = json.load(fh)
    cfg = MlpConfig(
        input_dim=payload["input_dim"],
        output_dim=payload["output_dim"],
        hidden=tuple(payload["hidden"]),
        activation=payload["activation"],
    )
    params = MlpParams.from_flat(cfg, np.array(payload["params"], dtype=float))
    return params, {"seed": payload["seed"], "epoch": payload["epoch"]}


# generic-scalar evaluation -----------------------------------------------


def trace_params(tape: Tape, params: MlpParams):
    """Lift every weight and bias onto a tape as leaf variables.

    Returns the nested-list structure accepted by :func:`forward_scalars`;
    leaf order matches :meth:`MlpParams.flatten`.
    """
    layers = []
    for W, b in zip(params.weights, params.biases):
        Wt = [[tape.variable(float(w)) for w in row] for row in W]
        bt = [tape.variable(float(v)) for v in b]
        layers.append((Wt, bt))
    return layers


def forward_scalars(layers, x):
    """Run the net on a sequence of scalars of any kind.

    ``layers`` is a list of (W, b) with W a nested list and b a list; the
    entries may be floats or traced scalars.  Returns a list of output
    scalars.
    """
    h = list(x)
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        a = [sum(wij * hj for wij, hj in zip(row, h)) + bi for row, bi in zip(W, b)]
        h = [tanh(ai) for ai in a] if i < last else a
    return h


def layers_of(params: MlpParams):
    """Float nested-list view of the parameters for :func:`forward_scalars`."""
    return [
        ([[float(w) for w in row] for row in W], [float(v) for v in b])
        for W, b in zip(params.weights, params.biases)
    ]


def input_jacobian(params: MlpParams, x) -> np.ndarray:
    """Exact (output_dim, input_dim) Jacobian via forward-mode duals.

    One tangent seed per input column; the dual carries whole-layer numpy
    vectors, so each column costs one forward pass.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.config.input_dim,):
        raise ValueError("input dimension mismatch")
    cols = []
    last = len(params.weights) - 1
    for j in range(params.config.input_dim):
        seed = np.zeros_like(x)
        seed[j] = 1.0
        h = Dual(x, seed)
        for i, (W, b) in enumerate(zip(params.weights, params.biases)):
            h = Dual(W @ h.primal + b, W @ h.tangent)
            if i < last:
                h = tanh(h)
        cols.append(h.tangent)
    return np.stack(cols, axis=1)
