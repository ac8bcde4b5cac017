"""Time-sampled trajectories shared by the scheme and the ODE oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass
class Trajectory:
    """Samples of a curve with phi, slope and forward speed at each time.

    ``provenance`` is ``"mms"`` or ``"ode_oracle"``; ``flags`` records events
    such as a domain exit or a stop at a critical point.
    """

    times: np.ndarray
    points: np.ndarray
    phi_values: np.ndarray
    slope_values: np.ndarray
    speed_values: np.ndarray
    provenance: str
    p: float = 2.0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.phi_values = np.asarray(self.phi_values, dtype=float)
        self.slope_values = np.asarray(self.slope_values, dtype=float)
        self.speed_values = np.asarray(self.speed_values, dtype=float)
        n = self.times.size
        for name in ("points", "phi_values", "slope_values", "speed_values"):
            if len(getattr(self, name)) != n:
                raise ParameterError(f"{name} must have one entry per time")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ParameterError("times must be strictly increasing")
        if self.provenance not in ("mms", "ode_oracle"):
            raise ParameterError("provenance must be 'mms' or 'ode_oracle'")

    def __len__(self):
        return self.times.size

    @property
    def dim(self):
        return self.points.shape[1]

    def piecewise_constant(self, t):
        """Right-continuous-from-the-left sampling: the value at the first node >= t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.times, t - 1e-12 * max(1.0, float(self.times[-1])), side="left")
        return self.points[np.clip(idx, 0, len(self) - 1)]

    def linear(self, t):
        """Componentwise linear interpolation in coordinates."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([np.interp(t, self.times, self.points[:, j]) for j in range(self.dim)])
