"""Small unconstrained minimizer used for the inner resolvent problems.

BFGS with Armijo backtracking (steps leaving the domain or producing
non-finite values are shortened), followed by a few Newton steps on a
finite-difference Hessian of the analytic gradient.  Non-smooth objectives
get a Nelder-Mead polish from scipy instead of the Newton stage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import CoercivityError

_HUGE = 1e12


@dataclass
class OptResult:
    x: np.ndarray
    f: float
    grad_norm: float
    n_iter: int
    converged: bool
    status: str


def _check_coercive(x, f):
    if f < -_HUGE or float(np.max(np.abs(x))) > 1e10:
        raise CoercivityError("inner objective appears unbounded below")


def _bfgs(f, grad, x, in_domain, max_iter, gtol, ftol, xtol):
    fx = f(x)
    g = grad(x)
    n = x.size
    H = np.eye(n)
    # first step length of order of the gradient keeps the initial probe local
    gn0 = float(np.linalg.norm(g))
    if gn0 > 0:
        H *= min(1.0, 1.0 / gn0)
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        gn = float(np.linalg.norm(g))
        if gn <= gtol:
            status = "gtol"
            break
        step = -H @ g
        slope = float(step @ g)
        if slope >= 0:
            H = np.eye(n) * min(1.0, 1.0 / gn)
            step = -H @ g
            slope = float(step @ g)
        t = 1.0
        accepted = False
        while t > 1e-20:
            xn = x + t * step
            if in_domain(xn):
                fn = f(xn)
                if math.isfinite(fn) and fn <= fx + 1e-4 * t * slope:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            status = "line_search"
            break
        _check_coercive(xn, fn)
        gn_vec = grad(xn)
        s = xn - x
        y = gn_vec - g
        df = fx - fn
        x, fx, g = xn, fn, gn_vec
        if df <= ftol * (1.0 + abs(fx)) and float(np.linalg.norm(s)) <= xtol * (1.0 + float(np.linalg.norm(x))):
            status = "small_step"
            break
        sy = float(s @ y)
        if sy > 1e-300:
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
    return x, fx, g, it, status


def _newton_polish(f, grad, x, fx, g, in_domain, scale, n_steps=6):
    n = x.size
    for _ in range(n_steps):
        gn = float(np.linalg.norm(g))
        if gn == 0:
            break
        h = 1e-5 * scale
        Hm = np.empty((n, n))
        ok = True
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            if not (in_domain(x + e) and in_domain(x - e)):
                ok = False
                break
            Hm[:, i] = (grad(x + e) - grad(x - e)) / (2 * h)
        if not ok:
            break
        Hm = 0.5 * (Hm + Hm.T)
        try:
            step = -np.linalg.solve(Hm, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or float(step @ g) >= 0:
            break
        xn = x + step
        if not in_domain(xn):
            break
        fn = f(xn)
        gnew = grad(xn)
        # accept only genuine improvements of stationarity without raising f
        if not (math.isfinite(fn) and fn <= fx + 1e-14 * (1 + abs(fx))
                and float(np.linalg.norm(gnew)) < gn):
            break
        x, fx, g = xn, fn, gnew
    return x, fx, g


def _nelder_mead_polish(f, x, fx, in_domain, scale):
    def wrapped(z):
        return f(z) if in_domain(z) else math.inf

    n = x.size
    simplex = np.vstack([x] + [x + 0.05 * scale * np.eye(n)[i] for i in range(n)])
    simplex = np.array([s if in_domain(s) else x + 0.5 * (s - x) for s in simplex])
    res = _scipy_minimize(wrapped, x, method="Nelder-Mead",
                          options={"initial_simplex": simplex, "xatol": 1e-13 * max(scale, 1e-300),
                                   "fatol": 1e-15, "maxiter": 4000 * n, "maxfev": 8000 * n})
    if math.isfinite(res.fun) and res.fun <= fx:
        return np.asarray(res.x, dtype=float), float(res.fun)
    return x, fx


def minimize(f, grad, x0, in_domain, *, smooth=True, max_iter=500, gtol=1e-12,
             ftol=1e-10, xtol=1e-8, scale=1.0) -> OptResult:
    """Minimize ``f`` from ``x0`` inside ``in_domain``.

    ``scale`` sets the finite-difference step of the Newton stage and the size
    of the Nelder-Mead simplex; pass a typical length of the problem.
    """
    x = np.asarray(x0, dtype=float).copy()
    # BFGS stops on small steps as a fallback; the Newton stage then sharpens
    x, fx, g, it, status = _bfgs(f, grad, x, in_domain, max_iter, gtol, ftol * 1e-4, xtol * 1e-4)
    if smooth:
        x, fx, g = _newton_polish(f, grad, x, fx, g, in_domain, scale)
        gn = float(np.linalg.norm(g))
        converged = gn <= max(gtol, 1e-9 * (1.0 + abs(fx))) or status == "small_step"
    else:
        x, fx = _nelder_mead_polish(f, x, fx, in_domain, scale)
        # off the kinks the objective is smooth, and Newton removes the simplex noise;
        # at a kink the polish rejects its own steps and the simplex point stands
        x, fx, g = _newton_polish(f, grad, x, fx, grad(x), in_domain, scale)
        gn = float(np.linalg.norm(g))
        converged = True
    _check_coercive(x, fx)
    return OptResult(x, float(fx), gn, it, bool(converged), status)
