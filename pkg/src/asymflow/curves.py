"""Sampled curves: forward metric derivative, length, unit-speed reparametrization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError, ParameterError
from .metric_core import SpaceHandle, batch_distance

__all__ = [
    "SampledCurve",
    "segment_distances",
    "forward_metric_derivative",
    "length",
    "cumulative_length",
    "arclength_inverse",
    "reparametrize_unit_speed",
]


@dataclass(frozen=True)
class SampledCurve:
    """A polyline t_i -> x_i in a space, with strictly increasing times."""

    times: np.ndarray
    points: np.ndarray
    space: SpaceHandle

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        X = np.atleast_2d(np.asarray(self.points, dtype=float))
        if t.ndim != 1 or X.shape[0] != t.size:
            raise ParameterError("times and points must have the same length")
        if X.shape[1] != self.space.dim:
            raise ParameterError("point dimension does not match the space")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ParameterError("times must be strictly increasing")
        for row in X:
            if not self.space.in_domain(row):
                raise DomainError(f"curve point {row.tolist()} is outside the domain")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", X)

    def __len__(self):
        return self.times.size


def segment_distances(c: SampledCurve) -> np.ndarray:
    """Forward distances d(x_{i-1}, x_i), i = 1..N."""
    if len(c) < 2:
        return np.zeros(0)
    return batch_distance(c.space, c.points[:-1], c.points[1:])


def forward_metric_derivative(c: SampledCurve, i: int) -> float:
    """Averaged forward difference quotient at node i (one-sided at the ends)."""
    n = len(c)
    if n < 2:
        raise DegenerateInputError("need at least two samples")
    if not 0 <= i < n:
        raise ParameterError(f"node index {i} out of range")
    dt = np.diff(c.times)
    if i == 0:
        return float(c.space.distance(c.points[0], c.points[1]) / dt[0])
    left = c.space.distance(c.points[i - 1], c.points[i]) / dt[i - 1]
    if i == n - 1:
        return float(left)
    right = c.space.distance(c.points[i], c.points[i + 1]) / dt[i]
    return float(0.5 * (left + right))


def length(c: SampledCurve) -> float:
    """Sum of forward segment distances (a lower bound for the true length)."""
    if len(c) < 2:
        raise DegenerateInputError("length needs at least two samples")
    return float(np.sum(segment_distances(c)))


def cumulative_length(c: SampledCurve) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(segment_distances(c))])


def arclength_inverse(c: SampledCurve, s):
    """Smallest time t with cumulative length s, linear between nodes."""
    cum = cumulative_length(c)
    s = np.asarray(s, dtype=float)
    # leftmost preimage: searchsorted(left) lands on the first node reaching s
    j = np.clip(np.searchsorted(cum, s, side="left"), 1, len(c) - 1)
    s0, s1 = cum[j - 1], cum[j]
    t0, t1 = c.times[j - 1], c.times[j]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(s1 > s0, (s - s0) / (s1 - s0), 1.0)
    out = np.where(s <= cum[0], c.times[0], t0 + np.clip(w, 0, 1) * (t1 - t0))
    return float(out) if out.ndim == 0 else out


def reparametrize_unit_speed(c: SampledCurve) -> SampledCurve:
    """The same polyline with node times replaced by cumulative forward length.

    Stationary stretches collapse to their first node, matching the leftmost
    preimage convention of the inverse length map.
    """
    cum = cumulative_length(c)
    if cum[-1] <= 0:
        raise DegenerateInputError("zero-length curve has no unit-speed parametrization")
    keep = np.concatenate([[True], np.diff(cum) > 0])
    return SampledCurve(cum[keep], c.points[keep], c.space)
