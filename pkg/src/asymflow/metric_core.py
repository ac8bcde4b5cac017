"""Asymmetric metric spaces: the handle type, axiom checks, symmetrization, reversal.

A space is anything exposing ``distance(x, y)``, ``in_domain(x)``, a base point
and a reversibility profile ``theta(r)`` bounding ``d(x, y) / d(y, x)`` on the
forward ball of radius ``r`` around the base point.  Concrete spaces live in
:mod:`asymflow.spaces`; this module only needs the protocol.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError, UnsupportedOperationError

__all__ = [
    "SpaceHandle",
    "AxiomReport",
    "as_point",
    "symmetrized_distance",
    "reverse_metric",
    "appendix_constant",
    "check_axioms",
    "sample_points",
    "batch_distance",
]


class SpaceHandle:
    """A (pointed) asymmetric metric space on a subset of R^dim.

    Subclasses override :meth:`distance` and friends.  The base class can also
    be built directly from callables, which is how ad-hoc and deliberately
    broken spaces are assembled in the test-suite.

    Parameters
    ----------
    dim : int
    distance : callable, optional
        ``distance(x, y)`` for coordinate arrays.
    in_domain : callable, optional
        Domain predicate; defaults to "finite coordinates".
    base_point : array_like, optional
        The distinguished point of the pointed space (origin by default).
    theta : callable or float, optional
        Reversibility bound on forward balls around ``base_point``.
    tangent : SmoothTangentStructure, optional
    sampling_radius : float
        Half-width of the coordinate box used by the sampling harness.
    """

    name = "custom"
    vectorized = False
    constant_theta = False

    def __init__(self, dim, distance=None, in_domain=None, base_point=None,
                 theta=None, tangent=None, sampling_radius=1.0, name=None,
                 vectorized=False):
        if int(dim) < 1:
            raise ParameterError("dim must be a positive integer")
        self.dim = int(dim)
        self._distance = distance
        self._in_domain = in_domain
        self.base_point = (np.zeros(self.dim) if base_point is None
                           else np.asarray(base_point, dtype=float))
        if theta is None or np.isscalar(theta):
            value = math.inf if theta is None else float(theta)
            self._theta = lambda r, _v=value: _v
            self.constant_theta = theta is not None
        else:
            self._theta = theta
        self.tangent = tangent
        self.sampling_radius = float(sampling_radius)
        if name is not None:
            self.name = name
        self.vectorized = bool(vectorized)

    def distance(self, x, y):
        if self._distance is None:
            raise NotImplementedError
        return self._distance(x, y)

    def in_domain(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        return True if self._in_domain is None else bool(self._in_domain(x))

    def theta(self, r):
        return float(self._theta(r))

    def local_length(self, x) -> float:
        """Coordinate length over which the geometry near x is roughly uniform.

        Finite-difference stencils scale their radii by it.
        """
        return 1.0

    def geodesic(self, x0, x1, t):
        """Point at parameter t on a constant-forward-speed minimal geodesic."""
        raise UnsupportedOperationError(f"{self.name}: no geodesic supplier")

    def distance_grad(self, x, y):
        """Gradient of y -> d(x, y); finite differences unless overridden."""
        y = np.asarray(y, dtype=float)
        h = 1e-7 * max(1.0, float(np.linalg.norm(y)))
        g = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            g[i] = (self.distance(x, y + e) - self.distance(x, y - e)) / (2 * h)
        return g

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} dim={self.dim}>"


def as_point(space: SpaceHandle, x) -> np.ndarray:
    """Coerce to a float coordinate vector and check the domain."""
    arr = np.asarray(x, dtype=float)
    if arr.shape != (space.dim,):
        raise DomainError(f"expected a point of shape ({space.dim},), got {arr.shape}")
    if not space.in_domain(arr):
        raise DomainError(f"point {arr.tolist()} is outside the domain of {space.name}")
    return arr


def batch_distance(space: SpaceHandle, X, Y) -> np.ndarray:
    """Row-wise distances d(X[i], Y[i])."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if space.vectorized:
        return np.asarray(space.distance(X, Y), dtype=float)
    return np.array([space.distance(a, b) for a, b in zip(X, Y)], dtype=float)


def symmetrized_distance(space: SpaceHandle, x, y) -> float:
    x = as_point(space, x)
    y = as_point(space, y)
    return 0.5 * (float(space.distance(x, y)) + float(space.distance(y, x)))


class _ReversedSpace(SpaceHandle):
    def __init__(self, inner: SpaceHandle):
        theta = inner.theta(1.0) if inner.constant_theta else None
        tangent = None
        if inner.tangent is not None:
            from .spaces import ReversedTangent
            tangent = ReversedTangent(inner.tangent)
        super().__init__(inner.dim, base_point=inner.base_point, theta=theta,
                         tangent=tangent, sampling_radius=inner.sampling_radius,
                         name=f"reverse({inner.name})", vectorized=inner.vectorized)
        self.inner = inner

    def distance(self, x, y):
        return self.inner.distance(y, x)

    def in_domain(self, x):
        return self.inner.in_domain(x)

    def local_length(self, x):
        return self.inner.local_length(x)

    def geodesic(self, x0, x1, t):
        # the reversed traversal of a geodesic from x1 to x0
        return self.inner.geodesic(x1, x0, 1.0 - t)


def reverse_metric(space: SpaceHandle) -> SpaceHandle:
    """The reverse metric (x, y) -> d(y, x); reversing twice returns the original."""
    if isinstance(space, _ReversedSpace):
        return space.inner
    return _ReversedSpace(space)


def appendix_constant(p: float, eps: float) -> float:
    """Smallest C with (1+eps) a^p + C b^p >= (a+b)^p for all a, b >= 0."""
    if not p >= 1 or not eps > 0:
        raise ParameterError("need p >= 1 and eps > 0")
    if p == 1:
        return 1.0
    # C = (1+eps) / ((1+eps)^{1/(p-1)} - 1)^{p-1}; with u = log(1+eps)/(p-1) this is
    # exp(-(p-1) log(1 - e^{-u})), which neither cancels for small u nor overflows for large u
    u = math.log1p(eps) / (p - 1)
    return math.exp(-(p - 1) * math.log(-math.expm1(-u)))


def sample_points(space: SpaceHandle, n: int, rng, radius=None, center=None) -> np.ndarray:
    """Rejection-sample n in-domain points uniformly from a coordinate box."""
    R = space.sampling_radius if radius is None else float(radius)
    c = space.base_point if center is None else np.asarray(center, dtype=float)
    out = []
    tries = 0
    while len(out) < n:
        batch = c + rng.uniform(-R, R, size=(max(2 * (n - len(out)), 16), space.dim))
        for row in batch:
            if space.in_domain(row):
                out.append(row)
                if len(out) == n:
                    break
        tries += 1
        if tries > 10_000:
            raise DomainError(f"could not sample {n} points inside {space.name}")
    return np.array(out)


@dataclass
class AxiomReport:
    n_samples: int
    seed: int
    max_triangle_violation: float
    max_reversibility_violation: float
    max_identity_violation: float
    n_positivity_failures: int
    tol: float = 1e-12
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (self.max_triangle_violation <= self.tol
                and self.max_reversibility_violation <= self.tol
                and self.max_identity_violation <= self.tol
                and self.n_positivity_failures == 0)

    def to_dict(self):
        return {
            "check_name": "metric_axioms",
            "max_violation": max(self.max_triangle_violation,
                                 self.max_reversibility_violation,
                                 self.max_identity_violation),
            "n_samples": self.n_samples,
            "pass": self.passed,
            "details": {
                "triangle": self.max_triangle_violation,
                "reversibility": self.max_reversibility_violation,
                "identity": self.max_identity_violation,
                "positivity_failures": self.n_positivity_failures,
                "seed": self.seed,
            },
        }


def check_axioms(space: SpaceHandle, n_samples: int = 1000, seed: int = 0,
                 tol: float = 1e-12) -> AxiomReport:
    """Sample the metric axioms and the reversibility bound; never raises on violations."""
    if n_samples < 3:
        raise ParameterError("n_samples must be at least 3")
    rng = np.random.default_rng(seed)
    X = sample_points(space, n_samples, rng)
    i, j, k = (rng.permutation(n_samples) for _ in range(3))

    dxx = batch_distance(space, X, X)
    identity = float(np.max(np.abs(dxx)))

    distinct = np.any(X[i] != X[j], axis=1)
    dij = batch_distance(space, X[i], X[j])
    dji = batch_distance(space, X[j], X[i])
    positivity = int(np.sum(distinct & ~(dij > 0)))

    djk = batch_distance(space, X[j], X[k])
    dik = batch_distance(space, X[i], X[k])
    triangle = float(np.max(dik - dij - djk, initial=0.0))

    star = np.broadcast_to(space.base_point, X.shape)
    r_star = batch_distance(space, star, X)
    radius = np.maximum(r_star[i], r_star[j]) * (1 + 1e-12) + 1e-300
    th = np.array([space.theta(r) for r in radius])
    with np.errstate(invalid="ignore"):
        rev = np.where(np.isfinite(th), dij - th * dji, -np.inf)
    reversibility = float(np.max(rev, initial=0.0))
    ratio = np.where(dji > 0, dij / np.where(dji > 0, dji, 1.0), 1.0)

    return AxiomReport(
        n_samples=n_samples, seed=seed,
        max_triangle_violation=max(triangle, 0.0),
        max_reversibility_violation=max(reversibility, 0.0),
        max_identity_violation=identity,
        n_positivity_failures=positivity,
        tol=tol,
        details={"max_observed_ratio": float(np.max(ratio))},
    )
