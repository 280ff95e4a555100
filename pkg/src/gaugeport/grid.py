"""Uniform time grids shared by every module."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0 + k*dt for k = 0..steps.

    All time series in the package live either on the steps+1 grid points
    or on the steps intervals between them.
    """

    t0: float
    dt: float
    steps: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def n_points(self) -> int:
        return self.steps + 1

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    def points(self) -> np.ndarray:
        """Grid points t0 + k*dt, k = 0..steps."""
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def interval_starts(self) -> np.ndarray:
        """Left endpoints of the steps intervals."""
        return self.t0 + self.dt * np.arange(self.steps)


def require_same_grid(a: TimeGrid, b: TimeGrid, what: str = "series") -> None:
    if a != b:
        raise ValueError(f"grid mismatch between {what}: {a} vs {b}")
