"""Moreau-Yosida envelope, resolvent, slope estimators and envelope diagnostics.

The envelope of phi with exponent p is

    Phi_tau(x) = inf_y  phi(y) + d(x, y)^p / (p tau^(p-1)),

and the resolvent collects its minimizers.  Minimizers are located with a
multi-start quasi-Newton solve (see :mod:`asymflow._optimize`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize
from scipy.optimize import minimize_scalar

from ._optimize import minimize
from .errors import ConvergenceError, ParameterError
from .metric_core import SpaceHandle, appendix_constant, as_point, batch_distance, sample_points
from .potentials import Potential, require_certificate
from .reports import Report, make_report
from .spaces import FunkBall

__all__ = [
    "SolverConfig",
    "SlopeConfig",
    "ResolventResult",
    "phi_functional",
    "resolvent",
    "envelope",
    "envelope_monotonicity_check",
    "envelope_derivative_check",
    "local_slope",
    "slope",
    "global_slope_formula",
    "slope_resolvent_bound_check",
    "resolvent_inequality_check",
    "coercivity_estimate_check",
    "argmin_check",
    "tau_star_lower_bound",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Inner-solver settings.

    ``tol`` bounds the objective change accepted as converged, ``xtol`` the
    step length; ``barrier_strength`` adds ``-b log(1 - |y|^2)`` on the Funk
    ball (off by default: the forward distance already blows up at the
    boundary, and a barrier shifts the minimizer).
    """

    tol: float = 1e-10
    xtol: float = 1e-8
    gtol: float = 1e-12
    max_iter: int = 500
    n_restarts: int = 8
    barrier_strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_restarts < 1:
            raise ParameterError("n_restarts must be at least 1")
        if self.tol <= 0 or self.xtol <= 0:
            raise ParameterError("tolerances must be positive")


@dataclass
class ResolventResult:
    y_tau: np.ndarray
    phi_tau: float
    d_plus: float
    d_minus: float
    solver_report: dict = field(default_factory=dict)

    @property
    def distance(self):
        return 0.5 * (self.d_plus + self.d_minus)


def _dist(S, x, y):
    return float(S.distance(x, y))


def phi_functional(phi: Potential, S: SpaceHandle, tau: float, x, y) -> float:
    """phi(y) + d(x, y)^p / (p tau^(p-1))."""
    if not tau > 0:
        raise ParameterError("tau must be positive")
    x = as_point(S, x)
    y = as_point(S, y)
    val = phi(y)
    if val == math.inf:
        return math.inf
    p = phi.p
    return val + _dist(S, x, y) ** p / (p * tau ** (p - 1))


def _objective(phi, S, tau, x, barrier):
    p = phi.p
    c = 1.0 / (p * tau ** (p - 1))
    use_barrier = barrier > 0 and isinstance(S, FunkBall)

    def f(y):
        v = phi.func(y)
        if not math.isfinite(v):
            return math.inf
        val = v + c * _dist(S, x, y) ** p
        if use_barrier:
            val -= barrier * math.log1p(-float(y @ y))
        return val

    def g(y):
        gr = phi.differential(y)
        w = y - x
        if np.any(w):
            d = _dist(S, x, y)
            gr = gr + (c * p * d ** (p - 1)) * S.distance_grad(x, y)
        if use_barrier:
            gr = gr + barrier * 2 * y / (1 - float(y @ y))
        return gr

    return f, g


def _perturbation(S, x, radius, rng):
    u = rng.normal(size=x.size)
    u /= np.linalg.norm(u)
    z = x + radius * rng.uniform(0.2, 1.0) * u
    for _ in range(60):
        if S.in_domain(z):
            return z
        z = x + 0.5 * (z - x)
    return x.copy()


def resolvent(phi: Potential, S: SpaceHandle, tau: float, x, solver_cfg: SolverConfig | None = None
              ) -> ResolventResult:
    """Minimize y -> phi(y) + d(x, y)^p / (p tau^(p-1)) with deterministic multi-start.

    The first start is x itself; the remaining ``n_restarts - 1`` starts are
    seeded perturbations of x on the scale of the first solution.  The best
    objective wins, with lexicographic tie-breaking, and d_plus/d_minus bracket
    d(x, y) over all restarts that reach the best objective.
    """
    cfg = solver_cfg or SolverConfig()
    if not tau > 0:
        raise ParameterError("tau must be positive")
    x = as_point(S, x)
    if not math.isfinite(phi(x)):
        raise ParameterError("x must lie in the effective domain of phi")
    f, g = _objective(phi, S, tau, x, cfg.barrier_strength)
    rng = np.random.default_rng(cfg.seed)

    def run(start, scale):
        return minimize(f, g, start, S.in_domain, smooth=phi.smooth, max_iter=cfg.max_iter,
                        gtol=cfg.gtol, ftol=cfg.tol, xtol=cfg.xtol, scale=scale)

    first = run(x, max(float(np.linalg.norm(g(x))) * tau, 1e-8))
    step = float(np.linalg.norm(first.x - x))
    scale = max(step, 1e-8)
    results = [first]
    radius = 2.0 * step + 1e-9
    for _ in range(cfg.n_restarts - 1):
        start = _perturbation(S, x, radius, rng)
        results.append(run(start, scale))

    fbest = min(r.f for r in results)
    ties = [r for r in results if r.f <= fbest + 1e-12 * (1 + abs(fbest))]
    best = min(ties, key=lambda r: tuple(r.x))
    near = [r for r in results if r.f <= fbest + 1e-10 * (1 + abs(fbest))]
    dists = [_dist(S, x, r.x) for r in near]
    report = {
        "iterations": int(sum(r.n_iter for r in results)),
        "restarts": len(results),
        "converged_restarts": int(sum(r.converged for r in results)),
        "gap": float(best.grad_norm),
        "status": best.status,
    }
    if not any(r.converged for r in results):
        raise ConvergenceError("resolvent solve did not converge", best=best.x, report=report)
    y = best.x
    # report the envelope without the optional barrier term
    phi_tau = phi(y) + _dist(S, x, y) ** phi.p / (phi.p * tau ** (phi.p - 1))
    return ResolventResult(y, float(phi_tau), float(max(dists)), float(min(dists)), report)


def envelope(phi, S, tau, x, solver_cfg=None) -> float:
    return resolvent(phi, S, tau, x, solver_cfg).phi_tau


def tau_star_lower_bound(phi: Potential) -> float:
    """Lower bound for the coercivity threshold: inf if lam >= 0 else lam_-^(-1/(p-1))."""
    p, lam = require_certificate(phi)
    if lam >= 0:
        return math.inf
    return (-lam) ** (-1.0 / (p - 1))


# ---------------------------------------------------------------------------
# slopes


@dataclass(frozen=True)
class SlopeConfig:
    n_directions: int = 64
    radii: tuple = (1e-2, 5e-3, 2.5e-3)
    refine: bool = True
    seed: int = 0


def _directions(dim, n, seed):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        a = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.column_stack([np.cos(a), np.sin(a)])
    if dim == 3:
        k = np.arange(n) + 0.5
        z = 1 - 2 * k / n
        r = np.sqrt(1 - z * z)
        a = np.pi * (1 + 5 ** 0.5) * k
        return np.column_stack([r * np.cos(a), r * np.sin(a), z])
    U = np.random.default_rng(seed).normal(size=(n, dim))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def _richardson(values, radii):
    """Eliminate the O(r) and O(r^2) terms of a table at halving radii."""
    table = [np.asarray(v, dtype=float) for v in values]
    order = 1
    while len(table) > 1:
        ratio = radii[0] / radii[1]
        fac = ratio ** order
        table = [(fac * table[i + 1] - table[i]) / (fac - 1) for i in range(len(table) - 1)]
        radii = radii[1:]
        order += 1
    return table[0]


def _quotients(phi, S, x, U, r):
    fx = phi(x)
    out = np.empty(len(U))
    for i, u in enumerate(U):
        rr = r
        y = x + rr * u
        while not S.in_domain(y):
            rr *= 0.5
            y = x + rr * u
        d = _dist(S, x, y)
        out[i] = (fx - phi(y)) / d if d > 0 else 0.0
    return out


def local_slope(phi: Potential, S: SpaceHandle, x, fd_cfg: SlopeConfig | None = None) -> float:
    """Direction-sampled limsup of [phi(x) - phi(y)]_+ / d(x, y) as y -> x.

    Each direction's difference quotient is extrapolated to zero radius; the
    best direction is then refined by a local search over the sphere.
    """
    cfg = fd_cfg or SlopeConfig()
    x = as_point(S, x)
    radii = tuple(float(r) * S.local_length(x) for r in cfg.radii)

    def extrap(U):
        return _richardson([_quotients(phi, S, x, U, r) for r in radii], radii)

    U = _directions(S.dim, cfg.n_directions, cfg.seed)
    vals = extrap(U)
    i = int(np.argmax(vals))
    best = float(vals[i])
    if cfg.refine and S.dim > 1:
        if S.dim == 2:
            a0 = math.atan2(U[i, 1], U[i, 0])
            h = 2 * math.pi / len(U)
            res = minimize_scalar(lambda a: -float(extrap(np.array([[math.cos(a), math.sin(a)]]))[0]),
                                  bounds=(a0 - h, a0 + h), method="bounded",
                                  options={"xatol": 1e-10})
            best = max(best, -float(res.fun))
        else:
            def neg(z):
                n = np.linalg.norm(z)
                return -float(extrap((z / n)[None, :])[0]) if n > 0 else 0.0
            res = _scipy_minimize(neg, U[i], method="Nelder-Mead",
                                  options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 2000})
            best = max(best, -float(res.fun))
    return max(best, 0.0)


def slope(phi: Potential, S: SpaceHandle, x, fd_cfg: SlopeConfig | None = None) -> float:
    """Local slope: the dual norm of -d(phi) when available, else sampled."""
    x = np.asarray(x, dtype=float)
    if phi.smooth and S.tangent is not None:
        return float(S.tangent.F_dual(x, -phi.differential(x)))
    return local_slope(phi, S, x, fd_cfg)


@dataclass(frozen=True)
class GlobalSlopeConfig:
    n_directions: int = 64
    n_radii: int = 48
    min_radius: float = 1e-6
    max_radius: float | None = None
    refine: bool = True
    seed: int = 0


def global_slope_formula(phi: Potential, S: SpaceHandle, x, sample_cfg: GlobalSlopeConfig | None = None,
                         lam: float | None = None) -> float:
    """sup_y [ (phi(x) - phi(y)) / d(x, y) + (lam/p) d(x, y)^(p-1) ]_+ by sampling.

    ``lam`` defaults to the certificate's value; ``lam=0`` gives the global slope.
    """
    cfg = sample_cfg or GlobalSlopeConfig()
    p, cert_lam = require_certificate(phi)
    lam = cert_lam if lam is None else float(lam)
    x = as_point(S, x)
    fx = phi(x)
    R = cfg.max_radius if cfg.max_radius is not None else 4.0 * max(S.sampling_radius, 1.0)

    def value(y):
        if not S.in_domain(y):
            return -math.inf
        d = _dist(S, x, y)
        if d <= 0:
            return -math.inf
        fy = phi(y)
        if not math.isfinite(fy):
            return -math.inf
        return (fx - fy) / d + (lam / p) * d ** (p - 1)

    U = _directions(S.dim, cfg.n_directions, cfg.seed)
    fracs = np.geomspace(cfg.min_radius, 1.0, cfg.n_radii)
    best, best_y = 0.0, None
    for u in U:
        reach = R
        if isinstance(S, FunkBall):
            reach = float(S._exit_length(x, u)) * (1 - 1e-9)
        for s in fracs:
            y = x + s * reach * u
            v = value(y)
            if v > best:
                best, best_y = v, y
    if cfg.refine and best_y is not None:
        res = _scipy_minimize(lambda y: -value(y) if np.isfinite(value(y)) else 1e300, best_y,
                              method="Nelder-Mead",
                              options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        if np.isfinite(res.fun) and -res.fun > best:
            best = -float(res.fun)
    return max(best, 0.0)


# ---------------------------------------------------------------------------
# envelope diagnostics


def envelope_monotonicity_check(phi, S, x, tau_list, solver_cfg=None, tol=1e-7) -> Report:
    """phi(x) >= Phi_t0(x) >= Phi_t1(x), d(x, y_t0) <= d(x, y_t1), phi(y_t0) >= phi(y_t1)."""
    taus = [float(t) for t in tau_list]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ParameterError("tau_list must be increasing")
    x = as_point(S, x)
    res = [resolvent(phi, S, t, x, solver_cfg) for t in taus]
    fx = phi(x)
    viol = [res[0].phi_tau - fx]
    for a, b in zip(res, res[1:]):
        viol.append(b.phi_tau - a.phi_tau)
        viol.append(a.d_plus - b.d_minus)
        viol.append(phi(b.y_tau) - phi(a.y_tau))
    return make_report("envelope_monotonicity", viol, tol, n_samples=len(taus),
                       envelope=[r.phi_tau for r in res], distances=[r.distance for r in res])


def envelope_derivative_check(phi, S, x, tau, solver_cfg=None, h=None, tol=1e-4) -> Report:
    """Central difference of tau -> Phi_tau(x) against -(p-1)/p (d(x, y_tau)/tau)^p."""
    x = as_point(S, x)
    h = 1e-3 * tau if h is None else float(h)
    if not 0 < h < tau:
        raise ParameterError("need 0 < h < tau")
    p = phi.p
    up = envelope(phi, S, tau + h, x, solver_cfg)
    dn = envelope(phi, S, tau - h, x, solver_cfg)
    fd = (up - dn) / (2 * h)
    r = resolvent(phi, S, tau, x, solver_cfg)
    formula = -(p - 1) / p * (r.d_plus / tau) ** p
    err = abs(fd - formula)
    return make_report("envelope_derivative", [err], tol, n_samples=1, finite_difference=fd,
                       formula=formula)


def slope_resolvent_bound_check(phi, S, x, tau, solver_cfg=None, n_sweep=6, tol=1e-6,
                                limit_tol=1e-3) -> Report:
    """Slope at the resolvent point is bounded by d/tau; the envelope gap recovers the slope.

    Checks |d phi|^q(y_tau) <= (d(x, y_tau)/tau)^p and that (phi(x) - Phi_s(x))/s
    tends to |d phi|^q(x)/q along s = tau / 4^j (linear extrapolation of the
    last two values).
    """
    x = as_point(S, x)
    p = phi.p
    q = p / (p - 1)
    r = resolvent(phi, S, tau, x, solver_cfg)
    lhs = slope(phi, S, r.y_tau) ** q
    rhs = (r.d_plus / tau) ** p
    bound_violation = lhs - rhs
    fx = phi(x)
    ss = [tau / 4 ** j for j in range(n_sweep)]
    gaps = [(fx - envelope(phi, S, s, x, solver_cfg)) / s for s in ss]
    limit = (4 * gaps[-1] - gaps[-2]) / 3
    target = slope(phi, S, x) ** q / q
    limit_err = abs(limit - target)
    rep = make_report("slope_resolvent_bound", [bound_violation], tol, n_samples=n_sweep + 1,
                      limit=limit, target=target, limit_error=limit_err)
    if limit_err > limit_tol:
        rep.passed = False
    rep.max_violation = max(rep.max_violation, max(limit_err - limit_tol, 0.0))
    return rep


def resolvent_inequality_check(phi, S, x, tau_grid, solver_cfg=None, tol=1e-5) -> Report:
    """The chain

        (1 + lam s) |d phi|^q(y_tau) <= (1 + lam s) d^p / tau^p
            <= q (phi(x) - Phi_tau(x)) / tau <= |d phi|^q(x) / (1 + lam s)^(q/p),

    with s = tau^(p-1), for every tau on the grid with 1 + lam s > 0.
    """
    p, lam = require_certificate(phi)
    q = p / (p - 1)
    x = as_point(S, x)
    fx = phi(x)
    sx = slope(phi, S, x) ** q
    viol, used = [], 0
    for tau in tau_grid:
        k = 1 + lam * tau ** (p - 1)
        if k <= 0:
            continue
        r = resolvent(phi, S, tau, x, solver_cfg)
        a = k * slope(phi, S, r.y_tau) ** q
        b = k * (r.d_plus / tau) ** p
        c = q * (fx - r.phi_tau) / tau
        d = sx / k ** (q / p)
        viol += [a - b, b - c, c - d]
        used += 1
    return make_report("resolvent_inequalities", viol, tol, n_samples=used)


def coercivity_estimate_check(phi, S, tau, tau_star, x_star, n_samples=50, seed=0,
                              solver_cfg=None, tol=1e-8) -> Report:
    """Phi_tau(x) >= Phi_{tau*}(x*) - C(p, tau*, tau) d^p(x*, x) on sampled x."""
    if not 0 < tau < tau_star:
        raise ParameterError("need 0 < tau < tau_star")
    p = phi.p
    eps = (tau_star ** (p - 1) - tau ** (p - 1)) / (2 * tau ** (p - 1))
    C = appendix_constant(p, eps) / (p * tau_star ** (p - 1))
    x_star = as_point(S, x_star)
    base = envelope(phi, S, tau_star, x_star, solver_cfg)
    rng = np.random.default_rng(seed)
    X = sample_points(S, n_samples, rng)
    viol = []
    for x in X:
        if not math.isfinite(phi(x)):
            continue
        lhs = envelope(phi, S, tau, x, solver_cfg)
        viol.append(base - C * _dist(S, x_star, x) ** p - lhs)
    return make_report("coercivity_estimate", viol, tol, constant=C)


def argmin_check(phi, S, tau, x, result: ResolventResult, n_samples=1000, seed=0, radius=None,
                 tol=1e-10) -> Report:
    """Phi(tau, x; y_tau) <= Phi(tau, x; z) + tol on sampled z around y_tau."""
    x = as_point(S, x)
    rng = np.random.default_rng(seed)
    rad = radius if radius is not None else max(2 * result.d_plus, 1e-3)
    Z = sample_points(S, n_samples, rng, radius=rad, center=result.y_tau)
    p = phi.p
    dz = batch_distance(S, np.broadcast_to(x, Z.shape), Z)
    vals = np.array([phi(z) for z in Z]) + dz ** p / (p * tau ** (p - 1))
    own = phi_functional(phi, S, tau, x, result.y_tau)
    return make_report("resolvent_argmin", own - vals, tol, n_samples=n_samples)
