"""Time grid plus state sequence: the universal dataset/result format."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Lossless round-trip for IEEE doubles.
_FLOAT_FMT = "%.17g"


@dataclass
class Trajectory:
    times: np.ndarray  # (n,), strictly increasing, uniform spacing
    states: np.ndarray  # (n, d)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1 or self.states.ndim != 2:
            raise ValueError("times must be 1-D and states 2-D")
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if len(self.times) >= 2:
            dt = np.diff(self.times)
            if np.any(dt <= 0):
                raise ValueError("times must be strictly increasing")
            if np.max(np.abs(dt - dt[0])) > 1e-9:
                raise ValueError("times must be uniformly spaced")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def delta(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def omega(self) -> np.ndarray:
        return self.states[:, 1]

    def window(self, t0: float, t1: float) -> "Trajectory":
        """Restrict to samples with t0 <= t <= t1 (inclusive, with slack)."""
        mask = (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)
        return Trajectory(self.times[mask], self.states[mask], dict(self.meta))

    def to_csv(self, path) -> None:
        cols = ["t"] + (["delta", "omega"] if self.states.shape[1] == 2
                        else [f"x{i}" for i in range(self.states.shape[1])])
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for t, row in zip(self.times, self.states):
                vals = [t, *row]
                fh.write(",".join(_FLOAT_FMT % v for v in vals) + "\n")

    @classmethod
    def from_csv(cls, path, meta: dict | None = None) -> "Trajectory":
        raw = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(raw[:, 0], raw[:, 1:], meta or {})
