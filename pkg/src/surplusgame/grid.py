"""Uniform time grid shared by all simulated paths."""

from dataclasses import dataclass

import numpy as np

from .errors import GridAlignmentError

_REL_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0, horizon] with step ``dt`` and ``n_steps`` steps.

    Node k sits at t_k = k * dt; there are n_steps + 1 nodes.
    """

    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0.0:
            raise GridAlignmentError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise GridAlignmentError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @classmethod
    def from_horizon(cls, horizon: float, dt: float) -> "Grid":
        """Build a grid, requiring horizon to be an integer multiple of dt."""
        if dt <= 0.0:
            raise GridAlignmentError(f"dt must be positive, got {dt}")
        n = round(horizon / dt)
        if n < 1 or abs(n * dt - horizon) > _REL_TOL * max(1.0, abs(horizon)):
            raise GridAlignmentError(
                f"horizon {horizon} is not a positive integer multiple of dt {dt}"
            )
        return cls(dt=dt, n_steps=n)

    def steps_of(self, length: float, what: str = "length") -> int:
        """Number of grid steps in ``length``; errors unless it is a grid multiple."""
        m = round(length / self.dt)
        if m < 0 or abs(m * self.dt - length) > _REL_TOL * max(1.0, abs(length)):
            raise GridAlignmentError(f"{what} {length} is not a grid multiple of dt {self.dt}")
        return m

    def matches(self, other: "Grid") -> bool:
        return self.n_steps == other.n_steps and abs(self.dt - other.dt) <= _REL_TOL * self.dt

    def require_matches(self, other: "Grid", what: str = "grid"):
        if not self.matches(other):
            raise GridAlignmentError(
                f"{what} mismatch: ({self.dt}, {self.n_steps}) vs ({other.dt}, {other.n_steps})"
            )
