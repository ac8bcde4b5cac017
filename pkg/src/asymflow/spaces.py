"""Concrete asymmetric spaces and their Finsler tangent structures.

Shipped spaces: Euclidean, Randers (norm plus constant drift), Minkowski
(user-supplied norm) and the Funk metric on the open unit ball.  Each space
that carries a smooth tangent structure exposes the tangent norm ``F``, its
dual ``F_dual``, the Legendre transform and its inverse, from which gradients
and the duality maps are built.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError, UnsupportedOperationError
from .metric_core import SpaceHandle, as_point

__all__ = [
    "SmoothTangentStructure",
    "EuclideanTangent",
    "NormTangent",
    "FunkTangent",
    "ReversedTangent",
    "EuclideanSpace",
    "RandersSpace",
    "MinkowskiSpace",
    "FunkBall",
    "randers_norm",
    "quartic_norm",
    "gradient",
    "descending_gradient",
    "duality_map_jp",
    "duality_set_Jp",
    "funk_reversibility_profile",
    "space_from_descriptor",
]


def _norm(v):
    return np.sqrt(np.sum(np.square(v), axis=-1))


# ---------------------------------------------------------------------------
# tangent structures


class SmoothTangentStructure:
    """Finsler structure F(x, v) with numerically inverted Legendre transform.

    Subclasses supply ``F`` and its v-gradient ``dF``.  The Legendre transform
    is ``F * dF``; its inverse minimizes ``F(x, v)^2 / 2 - <zeta, v>``, which is
    strictly convex, with Newton steps on a finite-difference Hessian.
    """

    legendre_tol = 1e-14
    legendre_max_iter = 100

    def F(self, x, v):
        raise NotImplementedError

    def dF(self, x, v):
        raise NotImplementedError

    def legendre(self, x, v):
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            return np.zeros_like(v)
        return self.F(x, v) * self.dF(x, v)

    def F_dual(self, x, zeta):
        zeta = np.asarray(zeta, dtype=float)
        if not np.any(zeta):
            return 0.0
        return float(self.F(x, self.legendre_inv(x, zeta)))

    def legendre_inv(self, x, zeta):
        zeta = np.asarray(zeta, dtype=float)
        if not np.any(zeta):
            return np.zeros_like(zeta)
        scale = float(np.linalg.norm(zeta))
        best, best_res = None, math.inf
        # analytic start from the Euclidean proxy, then two rescaled starts
        for start in (zeta, 0.5 * zeta, 2.0 * zeta):
            v, res = self._newton_legendre(x, zeta, start.copy(), scale)
            if res < best_res:
                best, best_res = v, res
            # further starts only help when Newton failed outright
            if res <= 1e-9 * (1.0 + scale):
                break
        return best

    def _newton_legendre(self, x, zeta, v, scale):
        n = v.size
        res = math.inf

        def objective(w):
            return 0.5 * self.F(x, w) ** 2 - float(zeta @ w)

        f = objective(v)
        stalled = 0
        for _ in range(self.legendre_max_iter):
            g = self.legendre(x, v) - zeta
            res = float(np.linalg.norm(g))
            if res <= self.legendre_tol * (1.0 + scale):
                break
            # a finite-differenced dF puts a noise floor under the residual;
            # stop once the objective no longer moves
            if stalled >= 4:
                break
            h = 1e-6 * max(float(np.linalg.norm(v)), 1e-12)
            H = np.empty((n, n))
            for i in range(n):
                e = np.zeros(n)
                e[i] = h
                H[:, i] = (self.legendre(x, v + e) - self.legendre(x, v - e)) / (2 * h)
            H = 0.5 * (H + H.T)
            try:
                step = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = -g
            if float(step @ g) >= 0:
                step = -g
            t = 1.0
            while t > 1e-12:
                cand = v + t * step
                fc = objective(cand)
                if np.isfinite(fc) and fc <= f + 1e-4 * t * float(step @ g) + 1e-15 * abs(f):
                    break
                t *= 0.5
            else:
                break
            stalled = stalled + 1 if fc > f - 1e-15 * (1.0 + abs(f)) else 0
            v, f = cand, fc
        return v, res


class EuclideanTangent(SmoothTangentStructure):
    """F(x, v) = |v|; every map is the identity."""

    def F(self, x, v):
        return float(np.linalg.norm(v))

    def dF(self, x, v):
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        return v / n if n > 0 else np.zeros_like(v)

    def legendre(self, x, v):
        return np.array(v, dtype=float)

    def legendre_inv(self, x, zeta):
        return np.array(zeta, dtype=float)

    def F_dual(self, x, zeta):
        return float(np.linalg.norm(zeta))


class NormTangent(SmoothTangentStructure):
    """Position-independent tangent norm from a callable (Minkowski/Randers)."""

    def __init__(self, norm, norm_grad=None):
        self.norm = norm
        self.norm_grad = norm_grad

    def F(self, x, v):
        return float(self.norm(np.asarray(v, dtype=float)))

    def dF(self, x, v):
        v = np.asarray(v, dtype=float)
        if self.norm_grad is not None:
            return np.asarray(self.norm_grad(v), dtype=float)
        # fourth-order central differences; F is 1-homogeneous so scale the step with |v|
        h = 1e-3 * max(float(np.linalg.norm(v)), 1e-300)
        g = np.empty_like(v)
        for i in range(v.size):
            e = np.zeros_like(v)
            e[i] = h
            g[i] = (8 * (self.norm(v + e) - self.norm(v - e))
                    - (self.norm(v + 2 * e) - self.norm(v - 2 * e))) / (12 * h)
        return g


class FunkTangent(SmoothTangentStructure):
    """Funk norm on the unit ball:

    F(x, v) = (sqrt((1-|x|^2)|v|^2 + <x,v>^2) + <x,v>) / (1-|x|^2).
    """

    def F(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        r = float(np.linalg.norm(x))
        c = (1.0 - r) * (1.0 + r)
        b = float(x @ v)
        vv = float(v @ v)
        s = math.sqrt(c * vv + b * b)
        if b >= 0:
            return (s + b) / c
        return vv / (s - b) if s - b > 0 else 0.0

    def dF(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        r = float(np.linalg.norm(x))
        c = (1.0 - r) * (1.0 + r)
        b = float(x @ v)
        s = math.sqrt(c * float(v @ v) + b * b)
        if s == 0:
            return np.zeros_like(v)
        return ((c * v + b * x) / s + x) / c


class ReversedTangent(SmoothTangentStructure):
    """Tangent structure of the reverse metric: F~(x, v) = F(x, -v)."""

    def __init__(self, inner):
        self.inner = inner

    def F(self, x, v):
        return self.inner.F(x, -np.asarray(v, dtype=float))

    def dF(self, x, v):
        return -self.inner.dF(x, -np.asarray(v, dtype=float))

    def legendre(self, x, v):
        return -self.inner.legendre(x, -np.asarray(v, dtype=float))

    def legendre_inv(self, x, zeta):
        return -self.inner.legendre_inv(x, -np.asarray(zeta, dtype=float))

    def F_dual(self, x, zeta):
        return self.inner.F_dual(x, -np.asarray(zeta, dtype=float))


# ---------------------------------------------------------------------------
# norms


def randers_norm(drift, metric=None):
    """F(v) = sqrt(v^T A v) + <b, v> with its analytic gradient."""
    b = np.asarray(drift, dtype=float)
    A = np.eye(b.size) if metric is None else np.asarray(metric, dtype=float)
    Ainv = np.linalg.inv(A)
    if float(b @ Ainv @ b) >= 1.0:
        raise ParameterError("drift must have A^{-1}-norm < 1")

    def norm(v):
        return math.sqrt(max(float(v @ A @ v), 0.0)) + float(b @ v)

    def grad(v):
        a = math.sqrt(max(float(v @ A @ v), 0.0))
        return (A @ v) / a + b if a > 0 else np.zeros_like(v)

    return norm, grad


def quartic_norm(drift=None, dim=2):
    """F(v) = (sum v_i^4 + |v|^4)^(1/4) + <b, v>: smooth, strongly convex, non-quadratic."""
    b = np.zeros(dim) if drift is None else np.asarray(drift, dtype=float)
    # the symmetric part dominates |v|, so |b| < 1 keeps F positive
    if float(np.linalg.norm(b)) >= 1.0:
        raise ParameterError("drift must have Euclidean norm < 1")

    def norm(v):
        q = float(np.sum(v ** 4) + float(v @ v) ** 2)
        return q ** 0.25 + float(b @ v)

    def grad(v):
        q = float(np.sum(v ** 4) + float(v @ v) ** 2)
        if q == 0:
            return np.zeros_like(v)
        dq = 4 * v ** 3 + 4 * float(v @ v) * v
        return 0.25 * q ** -0.75 * dq + b

    return norm, grad


# ---------------------------------------------------------------------------
# spaces


class _LinearSpace(SpaceHandle):
    """Translation-invariant space d(x, y) = N(y - x) on all of R^n."""

    vectorized = True

    def geodesic(self, x0, x1, t):
        x0 = np.asarray(x0, dtype=float)
        return x0 + t * (np.asarray(x1, dtype=float) - x0)


class EuclideanSpace(_LinearSpace):
    name = "euclidean"

    def __init__(self, dim=2, sampling_radius=1.0):
        super().__init__(dim, theta=1.0, tangent=EuclideanTangent(),
                         sampling_radius=sampling_radius, vectorized=True)

    def distance(self, x, y):
        d = _norm(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
        return float(d) if np.ndim(d) == 0 else d

    def distance_grad(self, x, y):
        w = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        n = np.linalg.norm(w)
        return w / n if n > 0 else np.zeros_like(w)


class RandersSpace(_LinearSpace):
    """d(x, y) = |y - x| + <a, y - x> with |a| < 1."""

    name = "randers"

    def __init__(self, drift, sampling_radius=1.0):
        a = np.asarray(drift, dtype=float)
        na = float(np.linalg.norm(a))
        if na >= 1.0:
            raise ParameterError("Randers drift must satisfy |a| < 1")
        self.drift = a
        norm, grad = randers_norm(a)
        super().__init__(a.size, theta=(1 + na) / (1 - na), tangent=NormTangent(norm, grad),
                         sampling_radius=sampling_radius, vectorized=True)

    def distance(self, x, y):
        w = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        d = _norm(w) + w @ self.drift
        return float(d) if np.ndim(d) == 0 else d

    def distance_grad(self, x, y):
        w = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        n = np.linalg.norm(w)
        return w / n + self.drift if n > 0 else np.zeros_like(w)

    def dual_norm_closed_form(self, zeta):
        """Zermelo-navigation formula for the dual of |v| + <a, v>."""
        zeta = np.asarray(zeta, dtype=float)
        a = self.drift
        c = 1.0 - float(a @ a)
        az = float(a @ zeta)
        return (math.sqrt(c * float(zeta @ zeta) + az * az) - az) / c


class MinkowskiSpace(_LinearSpace):
    """d(x, y) = F(y - x) for a user norm F.

    Gradient and duality operations need ``smooth=True``; a non-smooth norm
    still defines a metric space but carries no tangent structure.
    """

    name = "minkowski"
    vectorized = False

    def __init__(self, norm, dim, norm_grad=None, smooth=True, theta=None,
                 sampling_radius=1.0):
        self.norm = norm
        self.norm_grad = norm_grad
        self.smooth = bool(smooth)
        if theta is None:
            theta = _estimate_norm_reversibility(norm, dim)
        tangent = NormTangent(norm, norm_grad) if smooth else None
        super().__init__(dim, theta=theta, tangent=tangent,
                         sampling_radius=sampling_radius, vectorized=False)

    def distance(self, x, y):
        return float(self.norm(np.asarray(y, dtype=float) - np.asarray(x, dtype=float)))

    def distance_grad(self, x, y):
        w = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if not np.any(w):
            return np.zeros_like(w)
        return self.tangent.dF(None, w) if self.tangent is not None else super().distance_grad(x, y)


def _estimate_norm_reversibility(norm, dim, n=4096):
    rng = np.random.default_rng(12345)
    U = rng.normal(size=(n, dim))
    ratios = [norm(-u) / norm(u) for u in U]
    # small safety margin: a sampled sup slightly underestimates the true one
    return float(max(ratios)) * (1 + 1e-3)


class FunkBall(SpaceHandle):
    """Funk metric on the open Euclidean unit ball of R^n.

    The distance is evaluated as ``log1p(|y-x| / s)``, where ``s`` is the
    Euclidean distance from y to the boundary along the ray from x through y;
    this agrees with the classical cross-ratio expression and stays accurate
    near the boundary.
    """

    name = "funk"
    vectorized = True

    def __init__(self, dim=2):
        if int(dim) < 2:
            raise ParameterError("the Funk ball needs dim >= 2")
        super().__init__(dim, theta=funk_reversibility_profile, tangent=FunkTangent(),
                         sampling_radius=1.0, vectorized=True)

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        return (x.shape[-1:] == (self.dim,) and bool(np.all(np.isfinite(x)))
                and bool(np.all(_norm(x) < 1.0)))

    def local_length(self, x):
        # the tangent norm varies on the scale of the distance to the sphere
        return float(min(1.0, 1.0 - np.linalg.norm(x)))

    @staticmethod
    def _exit_length(x, u):
        """Euclidean length from x to the unit sphere along unit direction u."""
        r = _norm(x)
        c = (1.0 - r) * (1.0 + r)
        b = np.sum(x * u, axis=-1)
        disc = np.sqrt(b * b + c)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(b <= 0, disc - b, c / (disc + b))

    def distance(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        w = y - x
        ell = _norm(w)
        safe = np.where(ell > 0, ell, 1.0)
        u = w / safe[..., None] if np.ndim(ell) else w / safe
        s = self._exit_length(y, u)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(ell > 0, np.log1p(ell / s), 0.0)
        return float(d) if np.ndim(d) == 0 else d

    def distance_grad(self, x, y):
        # chords are geodesics, so the y-gradient of d(x, .) is dF(y, y - x)
        w = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if not np.any(w):
            return np.zeros_like(w)
        return self.tangent.dF(y, w)

    def geodesic(self, x0, x1, t):
        x0 = np.asarray(x0, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        w = x1 - x0
        ell = float(np.linalg.norm(w))
        if ell == 0 or t == 0:
            return x0.copy()
        L = float(self._exit_length(x0, w / ell))
        rho = ell / L
        # chord fraction reached after forward distance t * d(x0, x1)
        frac = -math.expm1(t * math.log1p(-rho)) / rho
        return x0 + frac * w


def funk_reversibility_profile(r: float) -> float:
    """Reversibility bound 2 e^r - 1 on the forward ball B+_0(r) of the Funk ball."""
    if not r > 0:
        raise ParameterError("radius must be positive")
    return 2.0 * math.exp(r) - 1.0


# ---------------------------------------------------------------------------
# gradients and duality maps


def _tangent_of(space):
    if space.tangent is None:
        raise UnsupportedOperationError(f"{space.name} has no smooth tangent structure")
    return space.tangent


def _differential(phi, x):
    if not getattr(phi, "smooth", True):
        raise UnsupportedOperationError(f"potential {getattr(phi, 'name', phi)} is not smooth")
    return np.asarray(phi.differential(x), dtype=float)


def gradient(space, phi, x):
    """Finsler gradient: the inverse Legendre transform of d(phi)(x)."""
    x = as_point(space, x)
    T = _tangent_of(space)
    return T.legendre_inv(x, _differential(phi, x))


def descending_gradient(space, phi, x):
    """Gradient of -phi; differs from -gradient(phi) in irreversible spaces."""
    x = as_point(space, x)
    T = _tangent_of(space)
    return T.legendre_inv(x, -_differential(phi, x))


def duality_map_jp(space, x, v, p):
    """v -> F(x, v)^(p-2) v, with 0 -> 0."""
    if not p > 1:
        raise ParameterError("p must exceed 1")
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return np.zeros_like(v)
    T = _tangent_of(space)
    return T.F(x, v) ** (p - 2) * v


def duality_set_Jp(space, x, v, p):
    """The unique covector zeta with <zeta,v> = F^p(v) = F*(zeta)^q = F(v) F*(zeta)."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return np.zeros_like(v)
    T = _tangent_of(space)
    return T.legendre(x, duality_map_jp(space, x, v, p))


# ---------------------------------------------------------------------------
# descriptors


def space_from_descriptor(desc: dict) -> SpaceHandle:
    """Build a space from a config mapping (kind, dim, drift, norm, ...)."""
    kind = str(desc.get("kind", "")).lower()
    dim = int(desc.get("dim", 2))
    if kind == "euclidean":
        return EuclideanSpace(dim, sampling_radius=float(desc.get("sampling_radius", 1.0)))
    if kind == "randers":
        drift = desc.get("drift", [0.0] * dim)
        if len(drift) != dim:
            raise ParameterError("drift length must equal dim")
        return RandersSpace(drift, sampling_radius=float(desc.get("sampling_radius", 1.0)))
    if kind == "minkowski":
        which = str(desc.get("norm", "quartic"))
        drift = desc.get("drift", [0.0] * dim)
        if which == "quartic":
            norm, grad = quartic_norm(drift, dim)
        elif which == "randers":
            norm, grad = randers_norm(drift, desc.get("metric"))
        else:
            raise ParameterError(f"unknown Minkowski norm {which!r}")
        return MinkowskiSpace(norm, dim, norm_grad=grad, smooth=True,
                              sampling_radius=float(desc.get("sampling_radius", 1.0)))
    if kind == "funk":
        return FunkBall(dim)
    if kind == "shifted_euclidean":
        # deliberately broken fixture for exercising the axiom harness
        offset = float(desc.get("offset", -0.1))
        return SpaceHandle(dim, distance=lambda x, y: float(np.linalg.norm(np.subtract(x, y))) + offset,
                           theta=1.0, name="shifted_euclidean")
    raise ParameterError(f"unknown space kind {kind!r}")
