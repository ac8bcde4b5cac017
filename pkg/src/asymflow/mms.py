"""Minimizing-movement scheme: recursion, interpolants, discrete diagnostics, sweeps."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .curves import SampledCurve, forward_metric_derivative
from .envelope import SolverConfig, resolvent, slope
from .errors import AsymflowError, ParameterError, SchemeError
from .metric_core import SpaceHandle, as_point
from .potentials import Potential, require_certificate
from .reports import Report, make_report
from .trajectory import Trajectory

__all__ = [
    "Partition",
    "DiscreteSolution",
    "ConvergenceReport",
    "run_scheme",
    "de_giorgi_interpolant",
    "g_tau",
    "step_energy_terms",
    "discrete_energy_identity",
    "a_priori_check",
    "discrete_slope_monotonicity_check",
    "euler_lagrange_residuals",
    "scheme_trajectory",
    "sup_distance",
    "limit_trajectory",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Partition:
    """Time steps tau_1..tau_N with cumulative times t^0 = 0 < ... < t^N."""

    steps: tuple

    def __post_init__(self):
        steps = tuple(float(s) for s in self.steps)
        if not steps or any(not s > 0 or not math.isfinite(s) for s in steps):
            raise ParameterError("steps must be positive and finite")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def uniform(cls, T: float, tau: float) -> "Partition":
        """N = ceil(T/tau) steps of exactly tau (the last node may pass T by < tau)."""
        if not (T > 0 and tau > 0):
            raise ParameterError("T and tau must be positive")
        n = max(1, math.ceil(T / tau - 1e-9))
        return cls((tau,) * n)

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.steps)])

    @property
    def norm(self) -> float:
        return max(self.steps)

    def __len__(self):
        return len(self.steps)

    def locate(self, t: float):
        """(k, delta) with t = t^{k-1} + delta, 0 < delta <= tau_k; (0, 0) for t = 0."""
        times = self.times
        if t < 0 or t > times[-1] * (1 + 1e-14):
            raise ParameterError(f"t={t} outside [0, {times[-1]}]")
        if t == 0:
            return 0, 0.0
        k = int(np.searchsorted(times, t, side="left"))
        k = min(max(k, 1), len(self))
        delta = min(t - times[k - 1], self.steps[k - 1])
        return k, delta


@dataclass
class DiscreteSolution:
    partition: Partition
    xs: np.ndarray
    phis: np.ndarray
    speed: np.ndarray
    d_plus: np.ndarray
    d_minus: np.ndarray
    g_cache: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.partition.times

    def piecewise_constant(self, t):
        k, _ = self.partition.locate(t)
        return self.xs[k]


def run_scheme(phi: Potential, S: SpaceHandle, x0, P: Partition, solver_cfg: SolverConfig | None = None
               ) -> DiscreteSolution:
    """Iterate Xi^k = J_{tau_k}[Xi^{k-1}] from x0."""
    cfg = solver_cfg or SolverConfig()
    x0 = as_point(S, x0)
    xs = [x0]
    phis = [phi(x0)]
    speed, dp, dm = [], [], []
    for k, tau in enumerate(P.steps, start=1):
        try:
            r = resolvent(phi, S, tau, xs[-1], cfg)
        except AsymflowError as exc:
            partial = DiscreteSolution(Partition(P.steps[:k - 1]) if k > 1 else P, np.array(xs),
                                       np.array(phis), np.array(speed), np.array(dp), np.array(dm))
            raise SchemeError(f"resolvent failed at step {k}: {exc}", partial=partial, step=k) from exc
        xs.append(r.y_tau)
        phis.append(phi(r.y_tau))
        d = float(S.distance(xs[-2], xs[-1]))
        speed.append(d / tau)
        dp.append(r.d_plus)
        dm.append(r.d_minus)
    return DiscreteSolution(P, np.array(xs), np.array(phis), np.array(speed), np.array(dp), np.array(dm))


def de_giorgi_interpolant(phi, S, sol: DiscreteSolution, t: float, solver_cfg=None):
    """A point of J_delta[Xi^{k-1}] for t = t^{k-1} + delta; nodes return Xi^k."""
    k, delta = sol.partition.locate(t)
    if k == 0:
        return sol.xs[0].copy()
    if delta >= sol.partition.steps[k - 1]:
        return sol.xs[k].copy()
    return resolvent(phi, S, delta, sol.xs[k - 1], solver_cfg).y_tau


def _g_step(phi, S, sol, k, delta, cfg):
    """d^+_delta(Xi^{k-1}) / delta, cached by (k, delta)."""
    key = (k, float(delta))
    if key not in sol.g_cache:
        if delta >= sol.partition.steps[k - 1]:
            val = sol.d_plus[k - 1] / delta
        else:
            val = resolvent(phi, S, delta, sol.xs[k - 1], cfg).d_plus / delta
        sol.g_cache[key] = float(val)
    return sol.g_cache[key]


def g_tau(phi, S, sol: DiscreteSolution, t: float, solver_cfg=None) -> float:
    """The De Giorgi diagnostic G_tau(t) = d^+_delta(Xi^{k-1}) / delta."""
    k, delta = sol.partition.locate(t)
    if k == 0 or delta <= 0:
        raise ParameterError("G_tau is defined for t in (0, t^N]")
    return _g_step(phi, S, sol, k, delta, solver_cfg)


def _gauss_legendre(fn, a, b, order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * sum(w * fn(mid + half * s) for s, w in zip(nodes, weights))


def _adaptive(fn, a, b, order, tol, depth=0, whole=None):
    if whole is None:
        whole = _gauss_legendre(fn, a, b, order)
    m = 0.5 * (a + b)
    left = _gauss_legendre(fn, a, m, order)
    right = _gauss_legendre(fn, m, b, order)
    if abs(left + right - whole) <= tol or depth >= 6:
        return left + right
    return (_adaptive(fn, a, m, order, tol / 2, depth + 1, left)
            + _adaptive(fn, m, b, order, tol / 2, depth + 1, right))


def step_energy_terms(phi, S, sol: DiscreteSolution, k: int, order=8, tol=1e-10, solver_cfg=None):
    """(d^p / (p tau^(p-1)), (1/q) int_0^tau G^p, phi(Xi^{k-1}) - phi(Xi^k)) for step k."""
    p = phi.p
    q = p / (p - 1)
    tau = sol.partition.steps[k - 1]
    d = float(S.distance(sol.xs[k - 1], sol.xs[k]))
    move = d ** p / (p * tau ** (p - 1))
    fn = lambda s: _g_step(phi, S, sol, k, s, solver_cfg) ** p
    whole = _gauss_legendre(fn, 0.0, tau, order)
    # derivative-free resolvents of non-smooth potentials carry ~1e-8 noise in d+,
    # which no amount of subdivision removes
    rel = tol if phi.smooth else max(tol, 1e-7)
    integral = _adaptive(fn, 0.0, tau, order, rel * (1.0 + abs(whole)), whole=whole)
    return move, integral / q, float(sol.phis[k - 1] - sol.phis[k])


def discrete_energy_identity(phi, S, sol: DiscreteSolution, k: int, l: int, order=8, tol=1e-10,
                             solver_cfg=None) -> float:
    """|(1/p) int |Xi'|^p + (1/q) int G^p + phi(Xi^l) - phi(Xi^k)| over (t^k, t^l]."""
    if not 0 <= k < l <= len(sol.partition):
        raise ParameterError("need 0 <= k < l <= N")
    total = 0.0
    for j in range(k + 1, l + 1):
        move, dissip, _ = step_energy_terms(phi, S, sol, j, order, tol, solver_cfg)
        total += move + dissip
    return abs(total + sol.phis[l] - sol.phis[k])


def a_priori_check(phi, S, sol: DiscreteSolution, x_star, S_bound: float, T: float,
                   solver_cfg=None, n_gap_samples=20, tol=1e-6) -> Report:
    """Telescoping bound on the discrete action, boundedness, and the interpolant gap.

    ``S_bound`` and ``T`` are the hypothesis bounds (phi(Xi^0) <= S, d^p(x*, Xi^0) <= S,
    t^{N-1} <= T); they are checked and recorded rather than enforced.
    """
    p = phi.p
    x_star = as_point(S, x_star)
    taus = np.array(sol.partition.steps)
    d = np.array([float(S.distance(a, b)) for a, b in zip(sol.xs[:-1], sol.xs[1:])])
    action = np.cumsum(d ** p / (p * taus ** (p - 1)))
    drop = sol.phis[0] - sol.phis[1:]
    viol = action - drop
    dist_p = np.array([float(S.distance(x_star, x)) ** p for x in sol.xs])
    hyp = {
        "phi0_le_S": bool(sol.phis[0] <= S_bound),
        "dist0_le_S": bool(dist_p[0] <= S_bound),
        "time_le_T": bool(sol.times[-2] <= T if len(sol.times) > 1 else True),
    }
    # interpolant gap at step midpoints, scaled by ||tau||^(p-1)
    ks = np.unique(np.linspace(1, len(taus), min(n_gap_samples, len(taus))).astype(int))
    gaps = []
    for k in ks:
        t = sol.times[k - 1] + 0.5 * taus[k - 1]
        bar = sol.xs[k]
        tilde = de_giorgi_interpolant(phi, S, sol, t, solver_cfg)
        gaps.append(max(float(S.distance(bar, tilde)), float(S.distance(tilde, bar))) ** p)
    scale = sol.partition.norm ** (p - 1)
    rep = make_report("a_priori", viol, tol, n_samples=len(viol),
                      max_dist_p=float(np.max(dist_p)), bounded=bool(np.all(np.isfinite(dist_p))),
                      gap_over_tau_pow=float(max(gaps) / scale) if gaps else 0.0, hypotheses=hyp)
    if not np.all(np.isfinite(dist_p)):
        rep.passed = False
    return rep


def discrete_slope_monotonicity_check(phi, S, sol: DiscreteSolution, tol=1e-5, fd_cfg=None) -> Report:
    """exp(lam_tau (t^k)^(p-1)) |d phi|(Xi^k) is non-increasing in k."""
    p, lam = require_certificate(phi)
    regime_ok = (p < 2 and lam >= 0) or p == 2 or (p > 2 and lam == 0)
    if not regime_ok:
        raise ParameterError("(p, lam) outside the supported regimes")
    h = sol.partition.norm ** (p - 1)
    if 1 + lam * h <= 0:
        raise ParameterError("need 1 + lam ||tau||^(p-1) > 0")
    lam_tau = math.log1p(lam * h) / h
    vals = np.array([math.exp(lam_tau * t ** (p - 1)) * slope(phi, S, x, fd_cfg)
                     for t, x in zip(sol.times, sol.xs)])
    viol = (vals[1:] - vals[:-1]) - tol * (1 + vals[:-1])
    return make_report("discrete_slope_monotonicity", viol, 0.0, n_samples=len(vals), lam_tau=lam_tau)


def euler_lagrange_residuals(phi, S, sol: DiscreteSolution) -> np.ndarray:
    """|(Xi^k - Xi^{k-1})/tau_k - F^((2-p)/(p-1))(w) w| with w = grad(-phi)(Xi^k)."""
    from .spaces import descending_gradient

    p = phi.p
    out = []
    for k, tau in enumerate(sol.partition.steps, start=1):
        w = descending_gradient(S, phi, sol.xs[k])
        Fw = S.tangent.F(sol.xs[k], w)
        rhs = Fw ** ((2 - p) / (p - 1)) * w if Fw > 0 else np.zeros_like(w)
        out.append(float(np.linalg.norm((sol.xs[k] - sol.xs[k - 1]) / tau - rhs)))
    return np.array(out)


def scheme_trajectory(phi, S, sol: DiscreteSolution, fd_cfg=None) -> Trajectory:
    """Node samples of a discrete solution with phi, slope and averaged forward speed."""
    times = sol.times
    curve = SampledCurve(times, sol.xs, S)
    speeds = np.array([forward_metric_derivative(curve, i) for i in range(len(times))])
    slopes = np.array([slope(phi, S, x, fd_cfg) for x in sol.xs])
    return Trajectory(times, sol.xs, sol.phis, slopes, speeds, "mms", p=phi.p)


def sup_distance(S, a: Trajectory, b: Trajectory, grid, mode=("constant", "constant")) -> float:
    """max over the grid of max(d(a(t), b(t)), d(b(t), a(t)))."""
    pa = a.piecewise_constant(grid) if mode[0] == "constant" else a.linear(grid)
    pb = b.piecewise_constant(grid) if mode[1] == "constant" else b.linear(grid)
    from .metric_core import batch_distance

    return float(np.max(np.maximum(batch_distance(S, pa, pb), batch_distance(S, pb, pa))))


@dataclass
class ConvergenceReport:
    taus: list
    cauchy_distances: list
    energy_residual: float
    monotone: bool
    warning: str | None = None

    def to_dict(self):
        return {"taus": list(self.taus), "cauchy_distances": list(self.cauchy_distances),
                "energy_residual": float(self.energy_residual), "monotone": bool(self.monotone),
                "warning": self.warning}


def limit_trajectory(phi, S, x0, T: float, tau_sweep, solver_cfg=None, n_grid=2001, fd_cfg=None,
                     solutions=None):
    """Run the scheme for each step size and return the finest run with a Cauchy report.

    ``solutions`` may carry precomputed :class:`DiscreteSolution` objects (one
    per step size, e.g. from parallel workers) to skip the scheme runs.
    """
    from .analysis import verify_energy_identity

    taus = [float(t) for t in tau_sweep]
    if len(taus) < 1 or any(b >= a for a, b in zip(taus, taus[1:])):
        raise ParameterError("tau_sweep must be strictly decreasing")
    if solutions is None:
        solutions = [run_scheme(phi, S, x0, Partition.uniform(T, tau), solver_cfg) for tau in taus]
    trajs = [scheme_trajectory(phi, S, s, fd_cfg) for s in solutions]
    grid = np.linspace(0.0, T, n_grid)
    cauchy = [sup_distance(S, a, b, grid) for a, b in zip(trajs, trajs[1:])]
    monotone = all(b <= a + 1e-12 for a, b in zip(cauchy, cauchy[1:]))
    finest = trajs[-1]
    residual = verify_energy_identity(finest, phi, S, n_random=0, T=T)
    warning = None if monotone else "sweep distances are not decreasing"
    if warning:
        log.warning(warning)
    return finest, ConvergenceReport(taus, cauchy, residual, monotone, warning)
