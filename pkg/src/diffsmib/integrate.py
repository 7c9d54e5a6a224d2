"""ODE integration generic over the scalar type.

The steppers operate on states represented as tuples of scalars, where a
scalar may be a plain float, a :class:`~diffsmib.autodiff.TracedScalar`, or
a :class:`~diffsmib.autodiff.Dual` (or a numpy array for batched states).
The same code therefore serves plain simulation and differentiable
training.

Two methods are provided:

* classical fixed-step RK4 (``rk4_step``, :func:`fixed_step_path`),
* adaptive Dormand-Prince 5(4) with an embedded error estimate
  (``dopri5_step``), stepping exactly onto each output time.

Gradient paths use fixed steps so the computed gradient is exactly the
gradient of the discrete map (discretize-then-optimize).  For adaptive
runs, :func:`integrate` can record the accepted step plan and
:func:`replay_path` re-runs the 5th-order formula over that plan with any
scalar kind.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Dual, TracedScalar, primal_value
from .trajectory import Trajectory

__all__ = [
    "IntegratorConfig",
    "TimeGrid",
    "BlowUpError",
    "DivergenceError",
    "rk4_step",
    "dopri5_step",
    "DopriStepResult",
    "integrate",
    "fixed_step_path",
    "replay_path",
]


class BlowUpError(RuntimeError):
    """State became non-finite or left the physically plausible range."""

    def __init__(self, t: float, message: str | None = None) -> None:
        self.t = t
        super().__init__(message or f"state blew up at t={t:.6g}")


class DivergenceError(RuntimeError):
    """Step count exceeded the configured maximum."""


# Swing states are O(1); anything larger is numerical failure.
_BLOWUP_LIMIT = 1e6


@dataclass
class IntegratorConfig:
    method: str = "dopri5"  # "rk4" | "dopri5"
    rtol: float = 1e-7
    atol: float = 1e-9
    dt_init: float = 0.01
    max_steps: int = 1_000_000
    safety: float = 0.9

    def __post_init__(self) -> None:
        if self.method not in ("rk4", "dopri5"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0 or self.dt_init <= 0:
            raise ValueError("rtol, atol and dt_init must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class TimeGrid:
    t0: float
    t_end: float
    dt_out: float

    def __post_init__(self) -> None:
        if self.t_end <= self.t0 or self.dt_out <= 0:
            raise ValueError("need t_end > t0 and dt_out > 0")
        n = (self.t_end - self.t0) / self.dt_out
        if abs(n - round(n)) > 1e-9:
            raise ValueError("(t_end - t0)/dt_out must be an integer")

    @property
    def n_intervals(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt_out))

    def times(self) -> np.ndarray:
        return self.t0 + self.dt_out * np.arange(self.n_intervals + 1)


def _unwrap(x):
    while True:
        if isinstance(x, Dual):
            x = x.primal
        elif isinstance(x, TracedScalar):
            x = x.value
        else:
            return x


def _check_finite(x, t: float) -> None:
    for xi in x:
        v = _unwrap(xi)
        if isinstance(v, float):
            if not math.isfinite(v) or abs(v) > _BLOWUP_LIMIT:
                raise BlowUpError(t)
        else:  # batched state component
            a = np.asarray(v)
            if not np.all(np.isfinite(a)) or np.abs(a).max() > _BLOWUP_LIMIT:
                raise BlowUpError(t)


def rk4_step(f, t, x, h, u=None):
    """One classical 4-stage Runge-Kutta update; local error O(h^5)."""
    h2 = h / 2.0
    k1 = f(t, x, u)
    k2 = f(t + h2, tuple(xi + h2 * k for xi, k in zip(x, k1)), u)
    k3 = f(t + h2, tuple(xi + h2 * k for xi, k in zip(x, k2)), u)
    k4 = f(t + h, tuple(xi + h * k for xi, k in zip(x, k3)), u)
    h6 = h / 6.0
    out = tuple(
        xi + h6 * (a + 2.0 * (b + c) + d)
        for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
    )
    _check_finite(out, t + h)
    return out


# Dormand-Prince 5(4) tableau (Hairer, Norsett & Wanner).
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_DP_E = tuple(b5 - b4 for b5, b4 in zip(_DP_B5, _DP_B4))


def _dp_stages(f, t, x, h, u):
    ks = []
    for ci, row in zip(_DP_C, _DP_A):
        if row:
            xs = tuple(
                xi + h * sum(a * k[j] for a, k in zip(row, ks))
                for j, xi in enumerate(x)
            )
        else:
            xs = x
        ks.append(f(t + ci * h, xs, u))
    return ks


def _dp_advance(f, t, x, h, u):
    """5th-order update plus embedded error components (generic scalars)."""
    ks = _dp_stages(f, t, x, h, u)
    x_next = tuple(
        xi + h * sum(b * k[j] for b, k in zip(_DP_B5, ks) if b != 0.0)
        for j, xi in enumerate(x)
    )
    err = tuple(
        h * sum(e * k[j] for e, k in zip(_DP_E, ks) if e != 0.0)
        for j in range(len(x))
    )
    return x_next, err


@dataclass
class DopriStepResult:
    x_next: tuple
    error_norm: float
    accepted: bool
    h_next: float


def dopri5_step(f, t, x, h, cfg: IntegratorConfig, u=None) -> DopriStepResult:
    """One embedded 5(4) trial step with PI-free step-size control.

    Accepts iff the weighted RMS error norm is <= 1; the proposed next
    step is h * clamp(safety * err^(-1/5), 0.2, 5).  Rejection is a normal
    outcome, not an error.
    """
    x_next, err = _dp_advance(f, t, x, h, u)
    sq = 0.0
    for xi, xn, ei in zip(x, x_next, err):
        scale = cfg.atol + cfg.rtol * max(abs(primal_value(xi)), abs(primal_value(xn)))
        r = primal_value(ei) / scale
        sq += r * r
    norm = math.sqrt(sq / len(x))
    if norm == 0.0:
        factor = 5.0
    else:
        factor = min(5.0, max(0.2, cfg.safety * norm ** -0.2))
    accepted = norm <= 1.0
    if accepted:
        _check_finite(x_next, t + h)
    return DopriStepResult(x_next, norm, accepted, h * factor)


def fixed_step_path(f, x0, grid: TimeGrid, substeps: int = 1, u=None) -> list:
    """RK4 path sampled at the output grid, generic over scalar kind.

    Each output interval is covered by ``substeps`` equal RK4 steps.
    Returns the list of states (tuples) at the grid points, x0 included.
    """
    h = grid.dt_out / substeps
    x = tuple(x0)
    path = [x]
    t = grid.t0
    for i in range(grid.n_intervals):
        for j in range(substeps):
            x = rk4_step(f, t, x, h, u)
            t = grid.t0 + grid.dt_out * i + h * (j + 1)
        t = grid.t0 + grid.dt_out * (i + 1)
        path.append(x)
    return path


def _dopri5_path(f, x0, grid: TimeGrid, cfg: IntegratorConfig, u=None):
    out_times = grid.times()
    x = tuple(float(v) for v in x0)
    states = [x]
    plan: list[tuple[float, float]] = []  # accepted (t, h)
    h = cfg.dt_init
    n_acc = 0
    n_rej = 0
    steps = 0
    t = grid.t0
    for t_target in out_times[1:]:
        while t < t_target - 1e-12:
            # step exactly to the output boundary; never overshoot
            h_try = min(h, t_target - t)
            res = dopri5_step(f, t, x, h_try, cfg, u)
            steps += 1
            if steps > cfg.max_steps:
                raise DivergenceError(
                    f"exceeded max_steps={cfg.max_steps} at t={t:.6g}"
                )
            if res.accepted:
                plan.append((t, h_try))
                x = res.x_next
                t = t + h_try
                n_acc += 1
                # keep the controller's proposal even when h was clipped
                h = max(res.h_next, h) if h_try < h else res.h_next
            else:
                n_rej += 1
                h = res.h_next
        t = t_target
        states.append(x)
    return states, plan, n_acc, n_rej


def integrate(
    f,
    x0,
    grid: TimeGrid,
    cfg: IntegratorConfig | None = None,
    u=None,
    return_plan: bool = False,
):
    """Integrate ``dx/dt = f(t, x, u)`` and sample exactly at the grid points.

    ``method='rk4'`` uses fixed steps of ``cfg.dt_init`` (which must divide
    ``grid.dt_out``); ``method='dopri5'`` adapts internally and clips steps
    onto every output time.  Raises :class:`DivergenceError` when the step
    budget is exhausted and :class:`BlowUpError` on non-finite states.
    """
    cfg = cfg or IntegratorConfig()
    times = grid.times()
    if cfg.method == "rk4":
        n_sub = grid.dt_out / cfg.dt_init
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("rk4 requires dt_init to divide dt_out")
        path = fixed_step_path(f, x0, grid, substeps=int(round(n_sub)), u=u)
        traj = Trajectory(times, np.array(path, dtype=float))
        plan = [(t, cfg.dt_init) for t in times[:-1]]
    else:
        states, plan, n_acc, n_rej = _dopri5_path(f, x0, grid, cfg, u)
        traj = Trajectory(
            times,
            np.array(states, dtype=float),
            {"accepted_steps": n_acc, "rejected_steps": n_rej},
        )
    if return_plan:
        return traj, plan
    return traj


def replay_path(f, x0, plan, u=None) -> list:
    """Re-run 5th-order steps over a frozen (t, h) plan, any scalar kind.

    Used to push traced scalars through an adaptive solve whose step
    sizes were decided on a primal run.
    """
    x = tuple(x0)
    path = [x]
    for t, h in plan:
        x_next, _ = _dp_advance(f, t, x, h, u)
        _check_finite(x_next, t + h)
        x = x_next
        path.append(x)
    return path
