"""Single-machine-infinite-bus plant: swing dynamics, equilibrium, linearization.

All quantities are per-unit; the rotor angle is in radians and is never
wrapped (trajectories of interest stay within a few radians, and wrapping
would corrupt l2 error metrics).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import sin

__all__ = [
    "SmibParams",
    "State",
    "LinearModel",
    "NoEquilibriumError",
    "swing_field",
    "vector_field",
    "equilibrium",
    "linearize",
]


class NoEquilibriumError(ValueError):
    """|Pm| exceeds the synchronizing power: no synchronous equilibrium."""


@dataclass(frozen=True)
class SmibParams:
    """Physical constants of the plant.

    M: inertia constant, D: damping, E: internal voltage, Vinf: infinite-bus
    voltage, X: reactance, Pm: mechanical power.
    """

    M: float
    D: float
    E: float
    Vinf: float
    X: float
    Pm: float

    def __post_init__(self) -> None:
        if not (self.M > 0 and self.D >= 0 and self.E > 0 and self.Vinf > 0 and self.X > 0):
            raise ValueError("require M > 0, D >= 0, E > 0, Vinf > 0, X > 0")

    @property
    def b(self) -> float:
        """Synchronizing coefficient E*Vinf/X."""
        return self.E * self.Vinf / self.X


@dataclass(frozen=True)
class State:
    delta: float  # rotor angle, rad
    omega: float  # rotor speed deviation, rad/s

    def as_tuple(self):
        return (self.delta, self.omega)

    def as_array(self) -> np.ndarray:
        return np.array([self.delta, self.omega], dtype=float)


@dataclass(frozen=True)
class LinearModel:
    """Small-signal model dx/dt = A (x - x*) + B (u - u*)."""

    A: np.ndarray  # 2x2
    B: np.ndarray  # (2,)
    x_star: State


def swing_field(M, D, b, x, u):
    """Swing-equation right-hand side, generic over the scalar kind.

    ``x`` is a (delta, omega) pair; M, D, b, u may be floats, traced scalars
    or duals, so learnable parameters flow through untouched.
    """
    delta, omega = x
    return (omega, (u - b * sin(delta) - D * omega) / M)


def vector_field(p: SmibParams, x, u=None):
    """Plant field (omega, (u - b sin(delta) - D omega)/M); u defaults to Pm."""
    if u is None:
        u = p.Pm
    return swing_field(p.M, p.D, p.b, x, u)


def equilibrium(p: SmibParams, stable: bool = True) -> State:
    """Synchronous operating point (arcsin(Pm/b), 0).

    The stable branch has delta* in [-pi/2, pi/2]; ``stable=False`` returns
    the unstable companion pi - delta*.
    """
    ratio = p.Pm / p.b
    if abs(ratio) > 1.0:
        raise NoEquilibriumError(
            f"|Pm/b| = {abs(ratio):.4g} > 1: loss of synchronism"
        )
    delta = math.asin(ratio)
    if not stable:
        delta = math.pi - delta
    return State(delta, 0.0)


def linearize(p: SmibParams, x_star: State) -> LinearModel:
    """Jacobian pair of the swing field at an operating point.

    A = [[0, 1], [-(b/M) cos(delta*), -D/M]], B = [0, 1/M]^T.
    """
    A = np.array(
        [
            [0.0, 1.0],
            [-(p.b / p.M) * math.cos(x_star.delta), -p.D / p.M],
        ]
    )
    B = np.array([0.0, 1.0 / p.M])
    return LinearModel(A, B, x_star)
