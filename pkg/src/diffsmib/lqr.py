"""Continuous-time LQR synthesis and closed-loop nonlinear simulation.

The Riccati equation is solved by Newton-Kleinman iteration: starting from
a stabilizing gain (K = 0 suffices here because the open-loop plant is
Hurwitz for D > 0), each step solves a 2x2 Lyapunov equation through its
Kronecker-vectorized 4x4 linear system.  The residual is verified on every
returned solution.

Closed-loop runs integrate the TRUE nonlinear swing dynamics; the feedback
u = Pm + dPm*1[t in window] - 1[t >= t_activate] * K (x - x*) is held
constant within each output interval (zero-order hold).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .integrate import IntegratorConfig, TimeGrid, integrate
from .smib import LinearModel, SmibParams, State, vector_field
from .trajectory import Trajectory

__all__ = [
    "LqrConfig",
    "LqrSolution",
    "DisturbanceSchedule",
    "ClosedLoopResult",
    "CareError",
    "solve_care",
    "riccati_residual",
    "closed_loop_simulate",
    "quadratic_cost",
]


class CareError(RuntimeError):
    """Riccati iteration could not start or failed to converge."""


@dataclass
class LqrConfig:
    Q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 1.0]))
    R: float = 0.1

    def __post_init__(self) -> None:
        self.Q = np.asarray(self.Q, dtype=float)
        if self.Q.shape != (2, 2) or not np.allclose(self.Q, self.Q.T):
            raise ValueError("Q must be a symmetric 2x2 matrix")
        if np.any(np.linalg.eigvalsh(self.Q) < -1e-12):
            raise ValueError("Q must be positive semidefinite")
        if self.R <= 0:
            raise ValueError("R must be positive")


@dataclass
class LqrSolution:
    P: np.ndarray  # Riccati solution, symmetric positive definite
    K: np.ndarray  # feedback gain row, u = -K (x - x*)
    model: LinearModel


@dataclass
class DisturbanceSchedule:
    delta_pm: float = 0.1
    window: tuple[float, float] = (1.0, 2.0)
    t_activate: float = 5.0

    def __post_init__(self) -> None:
        t_on, t_off = self.window
        if not (t_off > t_on >= 0.0):
            raise ValueError("need t_off > t_on >= 0")


def riccati_residual(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: float, P: np.ndarray) -> float:
    """Frobenius norm of A'P + PA - P B R^-1 B' P + Q."""
    Bc = B.reshape(2, 1)
    res = A.T @ P + P @ A - P @ Bc @ Bc.T @ P / R + Q
    return float(np.linalg.norm(res))


def _solve_lyapunov(Ac: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Solve Ac' P + P Ac = -C via the 4x4 Kronecker system."""
    n = Ac.shape[0]
    eye = np.eye(n)
    M = np.kron(eye, Ac.T) + np.kron(Ac.T, eye)
    P = np.linalg.solve(M, -C.reshape(n * n, order="F")).reshape(n, n, order="F")
    return 0.5 * (P + P.T)  # symmetrize against roundoff


def solve_care(
    model: LinearModel,
    cfg: LqrConfig,
    k_seed: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> LqrSolution:
    """Newton-Kleinman iteration for the continuous algebraic Riccati equation.

    ``k_seed`` must stabilize A - B K; by default K = 0 is used, which is
    valid whenever the open-loop A is Hurwitz.
    """
    A, B = model.A, model.B
    K = np.zeros(2) if k_seed is None else np.asarray(k_seed, dtype=float)
    Ac = A - np.outer(B, K)
    if np.max(np.linalg.eigvals(Ac).real) >= 0.0:
        raise CareError("initial gain does not stabilize the plant; supply k_seed")
    P = np.zeros((2, 2))
    prev_res = np.inf
    for _ in range(max_iter):
        C = cfg.Q + cfg.R * np.outer(K, K)
        P = _solve_lyapunov(Ac, C)
        K = (B @ P) / cfg.R
        Ac = A - np.outer(B, K)
        res = riccati_residual(A, B, cfg.Q, cfg.R, P)
        if res <= tol:
            break
        if res >= prev_res and prev_res < np.inf and res > 1e-6:
            raise CareError(f"Newton-Kleinman stalled at residual {res:.3e}")
        prev_res = res
    else:
        raise CareError(f"no convergence after {max_iter} iterations (residual {res:.3e})")
    return LqrSolution(P, K, model)


@dataclass
class ClosedLoopResult:
    trajectory: Trajectory
    u: np.ndarray  # control held over each interval (length n-1, padded to n)
    controller_active: np.ndarray  # 0/1 per sample
    disturbance_active: np.ndarray  # 0/1 per sample

    def to_csv(self, path) -> None:
        traj = self.trajectory
        with open(path, "w") as fh:
            fh.write("t,delta,omega,u,controller_active,disturbance_active\n")
            for i, t in enumerate(traj.times):
                fh.write(
                    "%.17g,%.17g,%.17g,%.17g,%d,%d\n"
                    % (
                        t,
                        traj.states[i, 0],
                        traj.states[i, 1],
                        self.u[i],
                        self.controller_active[i],
                        self.disturbance_active[i],
                    )
                )


def closed_loop_simulate(
    plant: SmibParams,
    x_star: State,
    sol: LqrSolution | None,
    sched: DisturbanceSchedule,
    grid: TimeGrid,
    x0: State | None = None,
    u_star: float | None = None,
    cfg: IntegratorConfig | None = None,
) -> ClosedLoopResult:
    """Simulate the true nonlinear plant under disturbance and LQR feedback.

    ``sol`` may come from any linearization (true parameters, DP-identified
    values, or a NODE Jacobian); ``sol=None`` runs open loop.  The control
    is recomputed from the sampled state at the start of each output
    interval and held constant across it.
    """
    cfg = cfg or IntegratorConfig()
    if u_star is None:
        u_star = plant.Pm
    times = grid.times()
    n = len(times)
    states = np.empty((n, 2))
    u_log = np.empty(n)
    ctrl_on = np.zeros(n, dtype=int)
    dist_on = np.zeros(n, dtype=int)
    x = (x0 or x_star).as_tuple()
    states[0] = x
    xs = x_star.as_array()
    t_on, t_off = sched.window
    for i in range(n - 1):
        t = times[i]
        u = u_star
        if t_on - 1e-12 <= t < t_off - 1e-12:
            u += sched.delta_pm
            dist_on[i] = 1
        if sol is not None and t >= sched.t_activate - 1e-12:
            u -= float(sol.K @ (np.asarray(x) - xs))
            ctrl_on[i] = 1
        u_log[i] = u
        sub = integrate(
            lambda tt, xx, uu: vector_field(plant, xx, uu),
            x,
            TimeGrid(t, times[i + 1], grid.dt_out),
            cfg,
            u=u,
        )
        x = tuple(sub.states[-1])
        states[i + 1] = x
    # pad the logs so every sample row has a value
    u_log[-1] = u_log[-2]
    ctrl_on[-1] = ctrl_on[-2]
    dist_on[-1] = dist_on[-2]
    traj = Trajectory(times, states)
    return ClosedLoopResult(traj, u_log, ctrl_on, dist_on)


def quadratic_cost(
    traj: Trajectory,
    u: np.ndarray,
    x_star: State,
    u_star: float,
    cfg: LqrConfig,
) -> float:
    """Trapezoidal discretization of the quadratic regulation cost."""
    u = np.asarray(u, dtype=float)
    if u.shape != traj.times.shape:
        raise ValueError("control signal must share the trajectory grid")
    dx = traj.states - x_star.as_array()
    du = u - u_star
    integrand = np.einsum("ni,ij,nj->n", dx, cfg.Q, dx) + cfg.R * du * du
    return float(np.trapezoid(integrand, traj.times))
