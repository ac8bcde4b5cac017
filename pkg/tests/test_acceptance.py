"""One test per acceptance criterion; each prints a PASS/FAIL line (run with ``-s`` to see them)."""
import math
import time

import numpy as np
import pytest

from asymflow.analysis import (RKConfig, certify_convexity, decay_exponent, dne_residual,
                               monotone_slope_check, ode_oracle, slope_constant_C,
                               verify_energy_identity, verify_exponential_decay,
                               verify_slope_regularization)
from asymflow.envelope import envelope_monotonicity_check, resolvent_inequality_check
from asymflow.metric_core import appendix_constant, sample_points, symmetrized_distance
from asymflow.mms import (Partition, discrete_energy_identity, discrete_slope_monotonicity_check,
                          run_scheme, scheme_trajectory, sup_distance)
from asymflow.potentials import Potential, build_potential
from asymflow.spaces import EuclideanSpace, FunkBall, RandersSpace

from conftest import DRIFT, hilbert_cross_ratio, print_verdict

SWEEP = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)


def _certified(phi, S, lam):
    cert = certify_convexity(phi, S, 2.0, lam, n_pairs=100, radius=0.8 if S.name == "funk" else None)
    assert cert.verified, cert.details["worst"]
    return phi.with_certificate(lam)


def _smooth_cases():
    """The shipped smooth convex tests: (name, space, certified potential, x0, T)."""
    E, R, F = EuclideanSpace(2), RandersSpace(DRIFT), FunkBall(2)
    lam_r = 1.0 / (1.0 + math.hypot(*DRIFT)) ** 2
    return [
        ("quadratic", E, _certified(build_potential("quadratic", E), E, 1.0), np.array([1.0, 0.5]), 1.0),
        ("randers", R, _certified(build_potential("quadratic", R), R, lam_r), np.array([1.0, 0.5]), 1.0),
        ("funk", F, _certified(build_potential("squared_distance", F, center=[0.1, 0.2]), F, 0.5),
         np.array([0.4, -0.2]), 1.0),
    ]


@pytest.fixture(scope="module")
def cases():
    return _smooth_cases()


@pytest.fixture(scope="module")
def sweeps(cases):
    """Scheme runs along the full sweep, with their wall-clock times."""
    out = {}
    for name, S, phi, x0, T in cases:
        runs = []
        for tau in SWEEP:
            start = time.perf_counter()
            sol = run_scheme(phi, S, x0, Partition.uniform(T, tau))
            runs.append((sol, time.perf_counter() - start))
        out[name] = runs
    return out


@pytest.fixture(scope="module")
def oracles(cases):
    return {name: ode_oracle(phi, S, x0, T, RKConfig(dt_out=1e-3)) for name, S, phi, x0, T in cases}


def test_criterion_01_funk_closed_forms():
    start = time.perf_counter()
    F = FunkBall(2)
    rng = np.random.default_rng(1)
    X = sample_points(F, 1000, rng)
    r = np.linalg.norm(X, axis=1)
    o = np.zeros(2)
    err_out = max(abs(F.distance(o, x) + math.log1p(-ri)) for x, ri in zip(X, r))
    err_in = max(abs(F.distance(x, o) - math.log1p(ri)) for x, ri in zip(X, r))
    # returning to the centre costs at most log 2, even from the sphere's edge
    U = rng.normal(size=(200, 2))
    U /= np.linalg.norm(U, axis=1)[:, None]
    edge = [F.distance(u * (1 - 1e-6), o) for u in U]
    elapsed = time.perf_counter() - start
    worst = max(err_out, err_in)
    ok = worst <= 1e-12 and max(edge) <= math.log(2) + 1e-9 and elapsed < 1.0
    print_verdict("criterion 1 (Funk closed forms)", ok, worst, 1e-12)
    assert ok, (err_out, err_in, max(edge), elapsed)


def test_criterion_02_hilbert():
    start = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(2)
    for dim in (2, 3):
        F = FunkBall(dim)
        X, Y = sample_points(F, 1000, rng), sample_points(F, 1000, rng)
        worst = max(worst, max(abs(symmetrized_distance(F, x, y) - hilbert_cross_ratio(x, y))
                               for x, y in zip(X, Y)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 5.0
    print_verdict("criterion 2 (symmetrized Funk = Hilbert)", ok, worst, 1e-10)
    assert ok, (worst, elapsed)


def test_criterion_03_quadratic_recursion():
    start = time.perf_counter()
    S = EuclideanSpace(2)
    x0 = np.array([1.0, 0.5])
    sol = run_scheme(build_potential("quadratic", S), S, x0, Partition.uniform(10.0, 0.1))
    want = x0[None, :] / 1.1 ** np.arange(101)[:, None]
    err = float(np.max(np.abs(sol.xs - want)))
    elapsed = time.perf_counter() - start
    ok = len(sol.xs) == 101 and err <= 1e-8 and elapsed < 5.0
    print_verdict("criterion 3 (quadratic proximal recursion)", ok, err, 1e-8)
    assert ok, (err, elapsed)


def test_criterion_04_energy_identity(cases, sweeps):
    tols = {"quadratic": 1e-4, "randers": 1e-3, "funk": 1e-3}
    results, elapsed = {}, 0.0
    for name, S, phi, _, T in cases:
        sol, secs = sweeps[name][-1]
        start = time.perf_counter()
        results[name] = verify_energy_identity(scheme_trajectory(phi, S, sol), phi, S, n_random=0, T=T)
        elapsed += secs + time.perf_counter() - start
    ok = all(results[n] <= tols[n] for n in tols) and elapsed < 120.0
    print_verdict("criterion 4 (energy identity, tau = 1e-3)", ok, max(results.values()), 1e-4)
    assert ok, (results, elapsed)


def test_criterion_05_discrete_energy():
    x0 = np.array([1.0, 0.5])
    closed, numeric = [], []
    E = EuclideanSpace(2)
    phi = build_potential("quadratic", E)
    sol = run_scheme(phi, E, x0, Partition.uniform(0.5, 0.1))
    closed += [discrete_energy_identity(phi, E, sol, k - 1, k, order=32) for k in range(1, 6)]
    # a linear potential on a Randers plane: every resolvent moves at constant speed
    R = RandersSpace([0.5, 0.0])
    c = np.array([1.0, 0.0])
    lin = Potential("linear", lambda x: float(c @ x), lambda x: c.copy())
    sol = run_scheme(lin, R, x0, Partition.uniform(0.3, 0.1))
    closed += [discrete_energy_identity(lin, R, sol, k - 1, k, order=32) for k in range(1, 4)]
    for name, S, phi, x, _ in _smooth_cases()[1:]:
        sol = run_scheme(phi, S, x, Partition.uniform(0.15, 0.05))
        numeric += [discrete_energy_identity(phi, S, sol, k - 1, k, order=32) for k in range(1, 4)]
    ok = max(closed) <= 1e-5 and max(numeric) <= 1e-4
    print_verdict("criterion 5 (discrete energy identity, order 32)", ok, max(numeric), 1e-4)
    assert ok, (closed, numeric)


def test_criterion_06_exponential_decay(cases):
    E = EuclideanSpace(2)
    phi = build_potential("quadratic", E).with_certificate(1.0)
    long_run = ode_oracle(phi, E, [1.0, 0.5], 3.0, RKConfig(dt_out=1e-3))
    rate = decay_exponent(long_run, 0.0, (0.1, 3.0))
    worst = 0.0
    for name, S, pot, x0, T in cases:
        known = 0.0 if name == "funk" else None
        traj = long_run if name == "quadratic" else ode_oracle(pot, S, x0, T, RKConfig(dt_out=1e-2))
        rep = verify_exponential_decay(traj, pot, S, known_inf=known)
        worst = max(worst, rep.max_violation)
    ok = abs(rate - 2.0) <= 0.02 * 2.0 and worst <= 1e-8
    print_verdict("criterion 6 (exponential decay)", ok, abs(rate - 2.0) / 2.0, 0.02)
    assert ok, (rate, worst)


def test_criterion_07_slope_regularization(cases, oracles):
    worst = 0.0
    for name, S, phi, _, _ in cases:
        known = 0.0 if name == "funk" else None
        rep = verify_slope_regularization(oracles[name], phi, S, known_inf=known)
        worst = max(worst, rep.max_violation)
    c_err = 0.0
    for t in (0.05, 0.5, 1.0, 2.0, 3.0):
        for lam in (-1.0, 0.3, 1.0):
            c_err = max(c_err, abs(slope_constant_C(2.0, lam, t) - t))
        for p in (1.5, 2.5, 4.0):
            c_err = max(c_err, abs(slope_constant_C(p, 0.0, t) - t ** (p - 1) / (p - 1)))
    ok = worst <= 1e-6 and c_err <= 1e-10
    print_verdict("criterion 7 (slope regularization)", ok, worst, 1e-6)
    assert ok, (worst, c_err)


def test_criterion_08_resolvent_chain(cases):
    grid = np.geomspace(1e-3, 2.0, 20)
    worst = 0.0
    for name, S, phi, x0, _ in cases:
        rep = resolvent_inequality_check(phi, S, x0, grid, tol=1e-5)
        worst = max(worst, rep.max_violation)
    ok = worst <= 1e-5
    print_verdict("criterion 8 (resolvent inequality chain)", ok, worst, 1e-5)
    assert ok, worst


def test_criterion_09_sweep_convergence(cases, sweeps, oracles):
    total, finals, monotone = 0.0, {}, True
    for name, S, phi, x0, T in cases:
        start = time.perf_counter()
        sols = [s for s, _ in sweeps[name]]
        trajs = [scheme_trajectory(phi, S, s) for s in sols]
        grid = np.linspace(0.0, T, 2001)
        errs = [sup_distance(S, tr, oracles[name], grid, ("constant", "linear")) for tr in trajs]
        total += sum(t for _, t in sweeps[name]) + time.perf_counter() - start
        monotone &= all(b < a for a, b in zip(errs, errs[1:]))
        finals[name] = errs[-1]
        print(f"  {name}: " + ", ".join(f"{e:.2e}" for e in errs))
    ok = monotone and max(finals.values()) <= 5e-3 and total < 300.0
    print_verdict("criterion 9 (scheme converges to the ODE oracle)", ok, max(finals.values()), 5e-3)
    assert ok, (finals, monotone, total)


def test_criterion_10_dne_residual(oracles, cases):
    _, S, phi, _, _ = cases[0]
    smooth = dne_residual(oracles["quadratic"], phi, S)
    R = RandersSpace(DRIFT)
    split = build_potential("l1_split", R, weight=0.5, center=[-2.0, 0.0])
    sol = run_scheme(split, R, [1.0, 0.5], Partition.uniform(0.5, 1e-3))
    res, skipped = dne_residual(scheme_trajectory(split, R, sol), split, R, return_skipped=True)
    print(f"  split test: {skipped} kink-adjacent samples skipped")
    ok = smooth <= 1e-5 and res <= 1e-2
    print_verdict("criterion 10 (doubly nonlinear equation residual)", ok, res, 1e-2)
    assert ok, (smooth, res)


def test_criterion_11_appendix_inequality():
    rng = np.random.default_rng(11)
    n = 100_000
    a = rng.uniform(0.0, 10.0, n)
    b = rng.uniform(0.0, 10.0, n)
    eps = 10.0 ** rng.uniform(-3.0, 3.0, n)
    p = rng.uniform(1.0, 8.0, n)
    C = np.array([appendix_constant(pi, ei) for pi, ei in zip(p, eps)])
    lhs = (1 + eps) * a ** p + C * b ** p
    rhs = (a + b) ** p
    violations = int(np.sum(lhs < rhs * (1 - 1e-12)))
    ok = violations == 0
    print_verdict("criterion 11 (appendix inequality, 1e5 tuples)", ok, float(violations), 0.0)
    assert ok, violations


def test_criterion_12_monotonicity_suite(cases, sweeps, oracles):
    worst = {}
    taus = [0.01, 0.05, 0.1, 0.5, 1.0]
    R = RandersSpace(DRIFT)
    split = build_potential("l1_split", R, weight=0.5, center=[-2.0, 0.0])
    E = EuclideanSpace(2)
    at_min = build_potential("quadratic", E, center=[0.5, -0.25])
    env = [envelope_monotonicity_check(split, R, [1.0, 0.5], taus),
           envelope_monotonicity_check(at_min, E, [0.5, -0.25], taus)]
    disc, cont = [], []
    for name, S, phi, x0, _ in cases:
        env.append(envelope_monotonicity_check(phi, S, x0, taus))
        disc.append(discrete_slope_monotonicity_check(phi, S, sweeps[name][2][0]))
        cont.append(monotone_slope_check(oracles[name], phi.certificate[1]))
    failed = []
    for label, reps in (("envelope", env), ("discrete_slope", disc), ("flow_slope", cont)):
        worst[label] = max(r.max_violation for r in reps)
        failed += [(label, r.to_dict()) for r in reps if not r.passed]
    ok = not failed
    print_verdict("criterion 12 (monotonicity suite)", ok, max(worst.values()), 0.0)
    assert ok, failed
