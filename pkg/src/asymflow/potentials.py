"""Potentials (functionals on a space) and the built-in registry.

A potential carries its exponent ``p`` because every downstream object (the
resolvent, the flow, the decay bounds) is defined for a fixed exponent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError, UnsupportedOperationError
from .spaces import EuclideanSpace, FunkBall, MinkowskiSpace, RandersSpace

__all__ = ["Potential", "build_potential", "REGISTRY", "fd_gradient"]


def fd_gradient(func, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (func(x + e) - func(x - e)) / (2 * h)
    return g


@dataclass(frozen=True)
class Potential:
    """A functional phi with optional coordinate differential and metadata.

    Attributes
    ----------
    func : callable
        Point -> real (may return +inf).
    grad : callable or None
        Coordinate differential; ``None`` means "difference it numerically".
    p : float
        Exponent of the flow the potential is driven with.
    certificate : tuple (p, lam) or None
        Claimed (p, lam)-convexity along the space's geodesics.
    smooth : bool
        False disables gradient/duality operations and switches the inner
        solver to a derivative-free polish.
    split : tuple or None
        ``(phi1, phi2)`` with phi1 convex, piecewise smooth and phi2 smooth.
    kink : callable or None
        Predicate flagging points where a non-smooth potential has no
        differential; used to skip samples in residual checks.
    """

    name: str
    func: Callable
    grad: Optional[Callable] = None
    p: float = 2.0
    certificate: Optional[tuple] = None
    known_inf: Optional[float] = None
    known_minimizer: Optional[np.ndarray] = None
    smooth: bool = True
    split: Optional[tuple] = None
    kink: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.p > 1:
            raise ParameterError("p must lie in (1, inf)")

    def __call__(self, x) -> float:
        return float(self.func(np.asarray(x, dtype=float)))

    def differential(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        return fd_gradient(self.func, x)

    def is_kink(self, x) -> bool:
        return bool(self.kink is not None and self.kink(np.asarray(x, dtype=float)))

    @property
    def lam(self):
        return None if self.certificate is None else float(self.certificate[1])

    def with_certificate(self, lam):
        return replace(self, certificate=(self.p, float(lam)))

    def with_p(self, p):
        cert = self.certificate
        if cert is not None and cert[0] != p:
            cert = None
        return replace(self, p=float(p), certificate=cert)


def constant(value=0.0, p=2.0):
    return Potential("constant", lambda x: float(value), lambda x: np.zeros_like(x), p=p,
                     certificate=(p, 0.0), known_inf=float(value))


# ---------------------------------------------------------------------------
# registry builders; each returns a Potential tailored to the space


def _upper_norm_constant(space):
    """C with d(x, y) <= C |y - x| on the straight segment geometry."""
    if isinstance(space, EuclideanSpace):
        return 1.0
    if isinstance(space, RandersSpace):
        return 1.0 + float(np.linalg.norm(space.drift))
    if isinstance(space, MinkowskiSpace):
        rng = np.random.default_rng(7)
        U = rng.normal(size=(4096, space.dim))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        return max(space.norm(u) for u in U) * (1 + 1e-3)
    return None


def quadratic(space, p=2.0, center=None, scale=1.0):
    """phi(x) = scale |x - c|^2 / 2."""
    c = np.zeros(space.dim) if center is None else np.asarray(center, dtype=float)
    k = float(scale)
    if k <= 0:
        raise ParameterError("scale must be positive")
    cert = None
    C = _upper_norm_constant(space)
    if C is not None:
        # Euclidean modulus k/2 t(1-t)|w|^2 and d <= C|w| give lam = k/C^2 at p = 2
        cert = (p, k / C ** 2) if p == 2 else (p, 0.0)
    return Potential("quadratic", lambda x: 0.5 * k * float((x - c) @ (x - c)),
                     lambda x: k * (x - c), p=p, certificate=cert, known_inf=0.0,
                     known_minimizer=c, params={"center": c.tolist(), "scale": k})


def linear(space, p=2.0, coeff=None):
    """phi(x) = <c, x>; affine along straight segments."""
    c = np.ones(space.dim) if coeff is None else np.asarray(coeff, dtype=float)
    cert = None if isinstance(space, FunkBall) else (p, 0.0)
    return Potential("linear", lambda x: float(c @ x), lambda x: c.copy(), p=p,
                     certificate=cert, params={"coeff": c.tolist()})


def squared_distance(space, p=2.0, center=None):
    """phi(x) = d(x_c, x)^2 / 2 (forward distance from the centre)."""
    c = np.zeros(space.dim) if center is None else np.asarray(center, dtype=float)
    if not space.in_domain(c):
        raise ParameterError("centre must lie in the domain")

    def func(x):
        if not space.in_domain(x):
            return math.inf
        return 0.5 * float(space.distance(c, x)) ** 2

    def grad(x):
        if not np.any(x != c):
            return np.zeros_like(x)
        return float(space.distance(c, x)) * space.distance_grad(c, x)

    cert = None
    C = _upper_norm_constant(space)
    if isinstance(space, EuclideanSpace):
        cert = (p, 1.0) if p == 2 else (p, 0.0)
    elif C is not None:
        cert = (p, 0.0)  # a squared norm is convex along segments
    return Potential("squared_distance", func, grad, p=p, certificate=cert, known_inf=0.0,
                     known_minimizer=c, params={"center": c.tolist()})


def funk_radial(space, p=2.0, a=0.0, b=1.0):
    """phi(x) = a D(x) + b D(x)^2 / 2 with D(x) = -log(1 - |x|) = d_F(0, x)."""
    if not isinstance(space, FunkBall):
        raise ParameterError("funk_radial needs the Funk ball")
    a, b = float(a), float(b)
    if a < 0 or b < 0 or a + b == 0:
        raise ParameterError("need a, b >= 0, not both zero")

    def func(x):
        r = float(np.linalg.norm(x))
        if r >= 1:
            return math.inf
        D = -math.log1p(-r)
        return a * D + 0.5 * b * D * D

    def grad(x):
        r = float(np.linalg.norm(x))
        if r == 0:
            return np.zeros_like(x)
        D = -math.log1p(-r)
        return (a + b * D) / (1 - r) * x / r

    kink = (lambda x: float(np.linalg.norm(x)) < 1e-12) if a > 0 else None
    return Potential("funk_radial", func, grad, p=p, known_inf=0.0,
                     known_minimizer=np.zeros(space.dim), smooth=a == 0, kink=kink,
                     params={"a": a, "b": b})


def l1_split(space, p=2.0, weight=1.0, center=None, kink_tol=1e-8):
    """phi = w |x_1| + |x - c|^2 / 2 split as (w |x_1|, |x - c|^2 / 2)."""
    w = float(weight)
    c = np.zeros(space.dim) if center is None else np.asarray(center, dtype=float)
    phi1 = Potential("l1", lambda x: w * abs(float(x[0])),
                     lambda x: np.eye(x.size)[0] * w * np.sign(x[0]), p=p, smooth=False,
                     kink=lambda x: abs(float(x[0])) <= kink_tol)
    phi2 = quadratic(space, p=p, center=c)

    def func(x):
        return phi1(x) + phi2(x)

    def grad(x):
        return phi1.differential(x) + phi2.differential(x)

    # soft-thresholding of c_1 gives the Euclidean-coordinate minimizer
    xbar = c.copy()
    xbar[0] = math.copysign(max(abs(c[0]) - w, 0.0), c[0])
    cert = None
    if phi2.certificate is not None:
        cert = phi2.certificate
    return Potential("l1_split", func, grad, p=p, certificate=cert, known_inf=func(xbar),
                     known_minimizer=xbar, smooth=False, split=(phi1, phi2), kink=phi1.kink,
                     params={"weight": w, "center": c.tolist()})


REGISTRY = {
    "quadratic": quadratic,
    "linear": linear,
    "squared_distance": squared_distance,
    "funk_radial": funk_radial,
    "l1_split": l1_split,
}


def build_potential(name: str, space, p=2.0, **params) -> Potential:
    try:
        builder = REGISTRY[name]
    except KeyError:
        raise ParameterError(f"unknown potential {name!r}; known: {sorted(REGISTRY)}") from None
    if "center" in params and params["center"] is not None:
        params["center"] = np.asarray(params["center"], dtype=float)
    if "coeff" in params and params["coeff"] is not None:
        params["coeff"] = np.asarray(params["coeff"], dtype=float)
    return builder(space, p=p, **params)


def require_certificate(phi: Potential):
    if phi.certificate is None:
        raise UnsupportedOperationError(f"potential {phi.name} carries no convexity certificate")
    return phi.certificate
