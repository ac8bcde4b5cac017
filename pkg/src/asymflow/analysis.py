"""Convexity certification, the smooth-case ODE oracle, and trajectory-level checks.

Everything here is sampling based: certificates record the worst observed
violation and how many samples were tried, and never claim more.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .curves import SampledCurve
from .envelope import SolverConfig, envelope
from .errors import ParameterError, UnsupportedOperationError
from .metric_core import SpaceHandle, as_point, sample_points
from .potentials import Potential, fd_gradient, require_certificate
from .reports import Report, make_report
from .spaces import descending_gradient, duality_set_Jp
from .trajectory import Trajectory

__all__ = [
    "ConvexityCertificate",
    "Trajectory",
    "RKConfig",
    "certify_convexity",
    "largest_certified_lambda",
    "ode_oracle",
    "verify_energy_identity",
    "decay_exponent",
    "verify_exponential_decay",
    "slope_constant_C",
    "verify_slope_regularization",
    "monotone_slope_check",
    "dne_residual",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# (p, lambda)-convexity


@dataclass
class ConvexityCertificate:
    p: float
    lam: float
    curve_family: Callable
    verified: bool
    max_violation: float
    n_samples: int
    details: dict = field(default_factory=dict)

    def curve(self, x0, x1, n=33) -> SampledCurve:
        """The certifying curve from x0 to x1, sampled at n parameter values."""
        ts = np.linspace(0.0, 1.0, n)
        pts = np.array([self.curve_family(x0, x1, t) for t in ts])
        return SampledCurve(ts, pts, self.details["space"])


def certify_convexity(phi: Potential, S: SpaceHandle, p: float, lam: float, n_pairs: int = 200,
                      n_times: int = 11, seed: int = 0, radius: float | None = None,
                      n_tau: int = 8, tol: float = 1e-8) -> ConvexityCertificate:
    """Sample the (p, lam)-convexity inequality along the space's geodesics.

    Along each sampled pair the curve is ``S.geodesic``.  Besides the defining
    inequality, the resolvent form (for a grid of tau below the coercivity
    threshold), the distance control d(x0, g(t)) <= t d(x0, x1) and, for
    lam >= 0, the difference-quotient form are checked.
    """
    if not p > 1:
        raise ParameterError("p must exceed 1")
    rng = np.random.default_rng(seed)
    X0 = sample_points(S, n_pairs, rng, radius=radius)
    X1 = sample_points(S, n_pairs, rng, radius=radius)
    ts = np.linspace(0.0, 1.0, n_times)
    lam_minus = max(-lam, 0.0)
    tau_max = lam_minus ** (-1.0 / (p - 1)) if lam_minus > 0 else 10.0
    taus = tau_max * np.geomspace(1e-3, 0.99, n_tau)

    v_def, v_res, v_dist, v_quot = [], [], [], []
    for x0, x1 in zip(X0, X1):
        f0, f1 = phi(x0), phi(x1)
        if not (math.isfinite(f0) and math.isfinite(f1)):
            continue
        D = float(S.distance(x0, x1))
        Dp = D ** p
        for t in ts:
            g = S.geodesic(x0, x1, t)
            fg = phi(g)
            mod = t * (1 - t ** (p - 1)) * Dp
            scale = 1.0 + abs(f0) + abs(f1) + Dp
            v_def.append((fg - ((1 - t) * f0 + t * f1 - lam / p * mod)) / scale)
            dg = float(S.distance(x0, g))
            v_dist.append(dg - t * D)
            for tau in taus:
                c = 1.0 / (p * tau ** (p - 1))
                lhs = fg + c * dg ** p
                rhs = (1 - t) * f0 + t * (f1 + c * Dp) - (lam + 1 / tau ** (p - 1)) / p * mod
                v_res.append((lhs - rhs) / (scale + c * Dp))
            if lam >= 0 and t > 0:
                v_quot.append(((fg - f0) / t - (f1 - f0 - lam / p * (1 - t ** (p - 1)) * Dp)) / scale)
    parts = {"definition": v_def, "resolvent_form": v_res, "distance_control": v_dist,
             "quotient_form": v_quot}
    worst = {k: (max(v) if v else 0.0) for k, v in parts.items()}
    max_v = max(0.0, *worst.values())
    return ConvexityCertificate(p, float(lam), S.geodesic, bool(max_v <= tol), float(max_v),
                                len(v_def), {"worst": worst, "space": S, "n_tau": n_tau})


def largest_certified_lambda(phi, S, p, lam_grid, **kw) -> ConvexityCertificate | None:
    """The certificate for the largest lam on the grid that verifies."""
    for lam in sorted(lam_grid, reverse=True):
        cert = certify_convexity(phi, S, p, lam, **kw)
        if cert.verified:
            return cert
    return None


# ---------------------------------------------------------------------------
# ODE oracle


@dataclass(frozen=True)
class RKConfig:
    """Classical RK4 with step-doubling error control, sampled on a uniform grid."""

    dt_out: float = 1e-3
    h0: float = 1e-3
    rtol: float = 1e-11
    atol: float = 1e-13
    h_min: float = 1e-12
    critical_tol: float = 1e-10
    n_gradient_checks: int = 10


def _flow_field(phi, S, p):
    def rhs(x):
        w = descending_gradient(S, phi, x)
        Fw = S.tangent.F(x, w)
        if Fw < 1e-300:
            return np.zeros_like(w), 0.0
        return Fw ** ((2 - p) / (p - 1)) * w, Fw
    return rhs


def _rk4_step(rhs, x, h, in_domain):
    k1, _ = rhs(x)
    stages = [x + 0.5 * h * k1]
    if not in_domain(stages[-1]):
        return None
    k2, _ = rhs(stages[-1])
    stages.append(x + 0.5 * h * k2)
    if not in_domain(stages[-1]):
        return None
    k3, _ = rhs(stages[-1])
    stages.append(x + h * k3)
    if not in_domain(stages[-1]):
        return None
    k4, _ = rhs(stages[-1])
    out = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return out if in_domain(out) else None


def ode_oracle(phi: Potential, S: SpaceHandle, x0, T: float, rk_cfg: RKConfig | None = None
               ) -> Trajectory:
    """Integrate x' = F(w)^((2-p)/(p-1)) w with w = grad(-phi)(x) up to time T.

    The run stops (and stays put) once F(w) drops below ``critical_tol``; if
    the step size collapses at the domain boundary the trajectory is
    truncated and ``flags['domain_exit']`` records the time.
    """
    cfg = rk_cfg or RKConfig()
    if not phi.smooth or S.tangent is None:
        raise UnsupportedOperationError("the ODE oracle needs a smooth potential and tangent structure")
    p = phi.p
    x = as_point(S, x0)
    rhs = _flow_field(phi, S, p)
    n_out = max(1, int(round(T / cfg.dt_out)))
    t_out = np.linspace(0.0, T, n_out + 1)
    pts = [x.copy()]
    flags = {}
    t = 0.0
    h = cfg.h0
    critical = False
    for target in t_out[1:]:
        while t < target - 1e-15 * max(1.0, target) and not critical:
            _, Fw = rhs(x)
            if Fw < cfg.critical_tol:
                critical = True
                flags["stopped_at_critical"] = t
                break
            h = min(h, target - t)
            full = _rk4_step(rhs, x, h, S.in_domain)
            half = _rk4_step(rhs, x, 0.5 * h, S.in_domain)
            half = _rk4_step(rhs, half, 0.5 * h, S.in_domain) if half is not None else None
            if full is None or half is None:
                h *= 0.25
                if h < cfg.h_min:
                    flags["domain_exit"] = t
                    break
                continue
            err = float(np.linalg.norm(half - full)) / 15.0
            scale = cfg.atol + cfg.rtol * max(float(np.linalg.norm(x)), 1.0)
            if err <= scale:
                x = half + (half - full) / 15.0
                if not S.in_domain(x):
                    x = half
                t += h
                h *= min(4.0, 0.9 * (scale / max(err, 1e-300)) ** 0.2)
            else:
                h *= max(0.1, 0.9 * (scale / err) ** 0.2)
                if h < cfg.h_min:
                    flags["domain_exit"] = t
                    break
        if "domain_exit" in flags:
            break
        pts.append(x.copy())
    times = t_out[:len(pts)]
    pts = np.array(pts)
    phis, slopes, speeds, chain = [], [], [], []
    for xi in pts:
        v, Fw = rhs(xi)
        dphi = phi.differential(xi)
        Fv = S.tangent.F(xi, v) if np.any(v) else 0.0
        phis.append(phi(xi))
        slopes.append(Fw)
        speeds.append(Fv)
        chain.append(abs(float(dphi @ v) + Fv ** p))
    checks = []
    for i in np.unique(np.linspace(0, len(pts) - 1, cfg.n_gradient_checks).astype(int)):
        w = descending_gradient(S, phi, pts[i])
        fd = -fd_gradient(phi.func, pts[i])
        checks.append(float(np.max(np.abs(S.tangent.legendre(pts[i], w) - fd))) if np.any(w) else 0.0)
    flags["chain_rule_residual"] = float(max(chain))
    flags["gradient_check"] = float(max(checks)) if checks else 0.0
    return Trajectory(times, pts, phis, slopes, speeds, "ode_oracle", p=p, flags=flags)


# ---------------------------------------------------------------------------
# energy identity


def _trapezoid(y, t):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def _energy_residual(traj, i, j):
    p = traj.p
    q = p / (p - 1)
    sl = slice(i, j + 1)
    t = traj.times[sl]
    lhs = _trapezoid(traj.speed_values[sl] ** p, t) / p + _trapezoid(traj.slope_values[sl] ** q, t) / q
    return abs(lhs - (traj.phi_values[i] - traj.phi_values[j]))


def verify_energy_identity(traj: Trajectory, phi=None, S=None, n_random: int = 10, seed: int = 0,
                           T: float | None = None) -> float:
    """Max trapezoid residual of the energy identity over [0, T] and random subintervals."""
    if len(traj) < 2:
        return 0.0
    last = len(traj) - 1
    if T is not None:
        last = int(np.searchsorted(traj.times, T * (1 + 1e-12), side="right")) - 1
    res = [_energy_residual(traj, 0, last)]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        i, j = sorted(rng.choice(last + 1, size=2, replace=False))
        res.append(_energy_residual(traj, i, j))
    return float(max(res))


# ---------------------------------------------------------------------------
# decay and regularization


class DegenerateDecay(ParameterError):
    """Too few positive gap samples to fit a decay rate."""


def decay_exponent(traj: Trajectory, known_inf: float, t_range=(0.1, 3.0)) -> float:
    """Least-squares rate r in phi(xi(t)) - inf ~ C exp(-r t) over t_range."""
    m = (traj.times >= t_range[0]) & (traj.times <= t_range[1])
    gap = traj.phi_values[m] - known_inf
    if np.sum(m) < 2 or np.any(gap <= 0):
        raise DegenerateDecay("not enough positive samples to fit a rate")
    slope, _ = np.polyfit(traj.times[m], np.log(gap), 1)
    return float(-slope)


def _certificate(phi):
    p, lam = require_certificate(phi)
    return float(p), float(lam)


def verify_exponential_decay(traj: Trajectory, phi: Potential, S: SpaceHandle, known_inf=None,
                             tol: float = 1e-8) -> Report:
    """Decay of phi - inf at rate q sgn(lam)|lam|^(q/p) between all sample pairs t >= t0 > 0.

    For lam > 0 with a known minimizer, also the distance decay and the two
    static bounds relating the gap to the slope and to the distance.
    """
    p, lam = _certificate(phi)
    q = p / (p - 1)
    inf = phi.known_inf if known_inf is None else float(known_inf)
    if inf is None or not math.isfinite(inf):
        raise ParameterError("a finite infimum is required")
    rate = q * math.copysign(abs(lam) ** (q / p), lam) if lam != 0 else 0.0
    m = traj.times > 0
    t = traj.times[m]
    gap = traj.phi_values[m] - inf
    # pairwise t0 <= t: gap(t) - gap(t0) exp(-rate (t - t0))
    dt = t[:, None] - t[None, :]
    mask = dt >= 0
    viol = np.where(mask, gap[:, None] - gap[None, :] * np.exp(-rate * np.where(mask, dt, 0.0)), -np.inf)
    parts = {"phi_decay": float(np.max(viol))}
    if lam > 0 and phi.known_minimizer is not None:
        xbar = np.asarray(phi.known_minimizer, dtype=float)
        dp = np.array([float(S.distance(xbar, x)) ** p for x in traj.points[m]])
        rate_d = q * lam ** (q / p)
        vd = np.where(mask, dp[:, None] - (p / lam) * gap[None, :]
                      * np.exp(-rate_d * np.where(mask, dt, 0.0)), -np.inf)
        parts["distance_decay"] = float(np.max(vd))
        parts["gap_vs_slope"] = float(np.max(gap - traj.slope_values[m] ** q / (q * lam ** (q / p))))
        parts["distance_vs_gap"] = float(np.max(lam / p * dp - (traj.phi_values[m] - phi(xbar))))
    worst = max(parts.values())
    return make_report("exponential_decay", [worst], tol, n_samples=int(np.sum(mask)), parts=parts,
                       rate=rate)


def slope_constant_C(p: float, lam: float, t: float) -> float:
    """int_0^t s^(p-2) exp(q lam s^(p-1)) exp(-q sgn(lam)|lam|^(q/p) s) ds."""
    if not p > 1 or t < 0:
        raise ParameterError("need p > 1 and t >= 0")
    if t == 0:
        return 0.0
    q = p / (p - 1)
    c = q * math.copysign(abs(lam) ** (q / p), lam) if lam != 0 else 0.0

    def smooth_part(s):
        return math.exp(q * lam * s ** (p - 1) - c * s)

    # algebraic weight (s - 0)^(p-2) handles the endpoint singularity for p < 2
    val, _ = quad(smooth_part, 0.0, t, weight="alg", wvar=(p - 2, 0.0), epsabs=0.0,
                  epsrel=1e-13, limit=200)
    return float(val)


def _check_regime(p, lam):
    if not ((p < 2 and lam >= 0) or p == 2 or (p > 2 and lam == 0)):
        raise UnsupportedOperationError(f"(p, lam) = ({p}, {lam}) outside the supported regimes")


def verify_slope_regularization(traj: Trajectory, phi: Potential, S: SpaceHandle, known_inf=None,
                                solver_cfg: SolverConfig | None = None, n_envelope: int = 20,
                                tol: float = 1e-6) -> Report:
    """Slope decay along the flow against the gap phi(x0) - inf and the envelope gap.

        t |d phi|^q(xi(t)) <= (1 + p lam_+ C(p, lam, t)) exp(-q lam t^(p-1)) (phi(x0) - inf)
        (t/q) |d phi|^q(xi(t)) <= exp(q lam_- t^(p-1)) (phi(x0) - Phi_t(x0))

    The envelope bound needs a resolvent solve per time, so it is evaluated on
    ``n_envelope`` evenly spread samples.
    """
    p, lam = _certificate(phi)
    _check_regime(p, lam)
    q = p / (p - 1)
    inf = phi.known_inf if known_inf is None else float(known_inf)
    if inf is None:
        raise ParameterError("a finite infimum is required")
    lp, lm = max(lam, 0.0), max(-lam, 0.0)
    x0 = traj.points[0]
    f0 = traj.phi_values[0]
    v_gap = []
    for t, s in zip(traj.times[1:], traj.slope_values[1:]):
        bound = (1 + p * lp * slope_constant_C(p, lam, t)) * math.exp(-q * lam * t ** (p - 1)) * (f0 - inf)
        v_gap.append(t * s ** q - bound)
    idx = np.unique(np.linspace(1, len(traj) - 1, min(n_envelope, len(traj) - 1)).astype(int))
    v_env = []
    for i in idx:
        t, s = traj.times[i], traj.slope_values[i]
        env = envelope(phi, S, t, x0, solver_cfg)
        v_env.append(t / q * s ** q - math.exp(q * lm * t ** (p - 1)) * (f0 - env))
    worst = {"gap_bound": max(v_gap, default=0.0), "envelope_bound": max(v_env, default=0.0)}
    return make_report("slope_regularization", list(worst.values()), tol,
                       n_samples=len(v_gap) + len(v_env), parts=worst)


def monotone_slope_check(traj: Trajectory, lam: float, tol: float = 1e-5, convex_tol: float = 1e-6
                         ) -> Report:
    """exp(lam t^(p-1)) slope(t) non-increasing; phi(xi(t)) convex in t when lam >= 0."""
    p = traj.p
    _check_regime(p, lam)
    vals = np.exp(lam * traj.times ** (p - 1)) * traj.slope_values
    viol = list((vals[1:] - vals[:-1]) - tol * (1 + np.abs(vals[:-1])))
    parts = {"weighted_slope": max(viol, default=0.0)}
    if lam >= 0 and len(traj) >= 3:
        t, f = traj.times, traj.phi_values
        s1 = np.diff(f) / np.diff(t)
        second = np.diff(s1) / (0.5 * (t[2:] - t[:-2]))
        parts["convexity"] = float(np.max(-second - convex_tol))
        viol.append(parts["convexity"])
    return make_report("monotone_slope", viol, 0.0, n_samples=len(traj), parts=parts)


# ---------------------------------------------------------------------------
# doubly nonlinear equation


def dne_residual(traj: Trajectory, phi: Potential, S: SpaceHandle, return_skipped: bool = False):
    """Max over interior samples of F*(xi, J_p(xi, xi') + d phi(xi)).

    For split potentials the differential is d phi2 plus the (unique, away from
    kinks) subgradient of phi1; samples whose finite-difference stencil touches
    a kink are skipped and counted.
    """
    if S.tangent is None:
        raise UnsupportedOperationError("dne_residual needs a tangent structure")
    p = traj.p
    t, X = traj.times, traj.points
    worst, skipped = 0.0, 0
    for i in range(1, len(traj) - 1):
        stencil = X[i - 1:i + 2]
        if phi.kink is not None:
            if any(phi.is_kink(z) for z in stencil):
                skipped += 1
                continue
            # a sign change of the kink coordinate inside the stencil
            if phi.split is not None and np.sign(stencil[0][0]) != np.sign(stencil[2][0]):
                skipped += 1
                continue
        v = (X[i + 1] - X[i - 1]) / (t[i + 1] - t[i - 1])
        zeta = duality_set_Jp(S, X[i], v, p)
        if phi.split is not None:
            phi1, phi2 = phi.split
            dphi = phi1.differential(X[i]) + phi2.differential(X[i])
        else:
            dphi = phi.differential(X[i])
        r = S.tangent.F_dual(X[i], zeta + dphi)
        worst = max(worst, float(r))
    return (worst, skipped) if return_skipped else worst
