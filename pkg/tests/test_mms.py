import numpy as np
import pytest

import asymflow.mms as mms_mod
from asymflow.analysis import RKConfig, ode_oracle
from asymflow.envelope import slope
from asymflow.errors import ConvergenceError, ParameterError, SchemeError
from asymflow.mms import (Partition, a_priori_check, de_giorgi_interpolant, discrete_energy_identity,
                          discrete_slope_monotonicity_check, euler_lagrange_residuals, g_tau,
                          limit_trajectory, run_scheme, scheme_trajectory, step_energy_terms,
                          sup_distance)
from asymflow.potentials import Potential, build_potential, constant
from asymflow.spaces import RandersSpace

X0 = np.array([1.0, 0.5])


@pytest.fixture
def quad(euclid):
    return build_potential("quadratic", euclid)


class TestPartition:
    def test_uniform(self):
        P = Partition.uniform(1.0, 0.1)
        assert len(P) == 10 and P.times[-1] == pytest.approx(1.0)

    def test_uniform_overshoots_by_less_than_tau(self):
        P = Partition.uniform(1.0, 0.3)
        assert len(P) == 4 and 1.0 <= P.times[-1] < 1.3

    def test_locate(self):
        P = Partition((0.1, 0.2, 0.3))
        assert P.locate(0.0) == (0, 0.0)
        k, delta = P.locate(0.2)
        assert k == 2 and delta == pytest.approx(0.1)
        k, delta = P.locate(0.3)
        assert k == 2 and delta == pytest.approx(0.2)
        assert P.norm == 0.3

    @pytest.mark.parametrize("steps", [(), (0.1, 0.0), (0.1, np.inf)])
    def test_rejects_bad_steps(self, steps):
        with pytest.raises(ParameterError):
            Partition(steps)

    def test_locate_outside(self):
        with pytest.raises(ParameterError):
            Partition((0.1,)).locate(0.2)


class TestScheme:
    def test_quadratic_recursion(self, euclid, quad):
        sol = run_scheme(quad, euclid, X0, Partition.uniform(10.0, 0.1))
        k = np.arange(101)[:, None]
        assert np.max(np.abs(sol.xs - X0 / 1.1 ** k)) <= 1e-8

    def test_minimizer_stays(self, randers):
        phi = build_potential("quadratic", randers, center=[0.5, -0.25])
        sol = run_scheme(phi, randers, [0.5, -0.25], Partition.uniform(0.5, 0.1))
        assert np.allclose(sol.xs, [0.5, -0.25], atol=1e-12)
        assert np.all(sol.speed <= 1e-10)

    def test_phi_non_increasing(self, funk):
        phi = build_potential("squared_distance", funk, center=[0.1, 0.2])
        sol = run_scheme(phi, funk, [0.4, -0.2], Partition.uniform(0.5, 0.05))
        assert np.all(np.diff(sol.phis) <= 1e-14)

    def test_minkowski_euler_lagrange(self, quartic):
        phi = build_potential("quadratic", quartic)
        sol = run_scheme(phi, quartic, X0, Partition.uniform(0.3, 0.05))
        assert np.max(euler_lagrange_residuals(phi, quartic, sol)) < 1e-5

    def test_cubic_euler_lagrange(self, randers):
        phi = build_potential("quadratic", randers, p=3.0)
        sol = run_scheme(phi, randers, X0, Partition.uniform(0.3, 0.05))
        assert np.max(euler_lagrange_residuals(phi, randers, sol)) < 1e-5

    def test_failure_keeps_partial_solution(self, euclid, quad, monkeypatch):
        real = mms_mod.resolvent
        calls = []

        def flaky(phi, S, tau, x, cfg=None):
            calls.append(tau)
            if len(calls) == 3:
                raise ConvergenceError("no restart converged", best=x)
            return real(phi, S, tau, x, cfg)

        monkeypatch.setattr(mms_mod, "resolvent", flaky)
        with pytest.raises(SchemeError) as exc:
            run_scheme(quad, euclid, X0, Partition.uniform(1.0, 0.1))
        assert exc.value.step == 3
        assert len(exc.value.partial.xs) == 3


class TestInterpolant:
    def test_nodes(self, euclid, quad):
        sol = run_scheme(quad, euclid, X0, Partition.uniform(0.5, 0.1))
        for k, t in enumerate(sol.times):
            assert np.array_equal(de_giorgi_interpolant(quad, euclid, sol, t), sol.xs[k])

    def test_closed_form(self, euclid, quad):
        sol = run_scheme(quad, euclid, X0, Partition.uniform(0.5, 0.1))
        for delta in (0.01, 0.05, 0.09):
            got = de_giorgi_interpolant(quad, euclid, sol, 0.2 + delta)
            assert np.allclose(got, sol.xs[2] / (1 + delta), atol=1e-10)

    def test_small_delta_tends_to_previous_node(self, euclid, quad):
        sol = run_scheme(quad, euclid, X0, Partition.uniform(0.5, 0.1))
        gaps = [np.linalg.norm(de_giorgi_interpolant(quad, euclid, sol, 0.1 + d) - sol.xs[1])
                for d in (1e-2, 1e-3, 1e-4)]
        assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 2e-4


class TestGTau:
    def test_closed_form(self, euclid, quad):
        sol = run_scheme(quad, euclid, X0, Partition.uniform(0.5, 0.1))
        for delta in (0.02, 0.1):
            want = np.linalg.norm(sol.xs[1]) / (1 + delta)
            assert g_tau(quad, euclid, sol, 0.1 + delta) == pytest.approx(want, abs=1e-9)

    def test_undefined_at_zero(self, euclid, quad):
        sol = run_scheme(quad, euclid, X0, Partition.uniform(0.5, 0.1))
        with pytest.raises(ParameterError):
            g_tau(quad, euclid, sol, 0.0)

    def test_linear_potential_on_randers(self):
        # homogeneous distance: every resolvent moves at the dual-norm speed
        S = RandersSpace([0.5, 0.0])
        c = np.array([1.0, 0.0])
        phi = Potential("linear", lambda x: float(c @ x), lambda x: c.copy())
        sol = run_scheme(phi, S, X0, Partition.uniform(0.3, 0.1))
        for t in (0.03, 0.1, 0.17, 0.3):
            assert g_tau(phi, S, sol, t) == pytest.approx(2.0, abs=1e-6)

    def test_bounds_slope_at_interpolant(self, randers):
        phi = build_potential("quadratic", randers)
        sol = run_scheme(phi, randers, X0, Partition.uniform(0.3, 0.1))
        for t in (0.05, 0.12, 0.25):
            y = de_giorgi_interpolant(phi, randers, sol, t)
            assert g_tau(phi, randers, sol, t) >= slope(phi, randers, y) - 1e-6


class TestDiscreteEnergy:
    def test_constant(self, funk):
        sol = run_scheme(constant(2.0), funk, [0.1, 0.1], Partition.uniform(0.3, 0.1))
        assert discrete_energy_identity(constant(2.0), funk, sol, 0, 3) == 0.0

    def test_quadratic_terms(self, euclid, quad):
        tau = 0.1
        sol = run_scheme(quad, euclid, X0, Partition.uniform(0.5, tau))
        r2 = X0 @ X0
        move, dissip, drop = step_energy_terms(quad, euclid, sol, 1)
        assert move == pytest.approx(r2 * tau / (2 * (1 + tau) ** 2), abs=1e-12)
        assert dissip == pytest.approx(r2 * tau / (2 * (1 + tau)), abs=1e-10)
        assert drop == pytest.approx(move + dissip, abs=1e-10)
        assert discrete_energy_identity(quad, euclid, sol, 0, 5) < 1e-9

    def test_funk_order_32(self, funk):
        phi = build_potential("squared_distance", funk, center=[0.1, 0.2])
        sol = run_scheme(phi, funk, [0.4, -0.2], Partition.uniform(0.1, 0.05))
        for k in (1, 2):
            assert discrete_energy_identity(phi, funk, sol, k - 1, k, order=32) < 1e-4

    def test_bad_indices(self, euclid, quad):
        sol = run_scheme(quad, euclid, X0, Partition.uniform(0.2, 0.1))
        with pytest.raises(ParameterError):
            discrete_energy_identity(quad, euclid, sol, 2, 2)


class TestDiscreteChecks:
    def test_a_priori(self, randers):
        phi = build_potential("quadratic", randers)
        sol = run_scheme(phi, randers, X0, Partition.uniform(1.0, 0.1))
        rep = a_priori_check(phi, randers, sol, [0.0, 0.0], S_bound=10.0, T=1.0)
        assert rep.passed, rep.to_dict()
        assert all(rep.details["hypotheses"].values())
        assert rep.details["gap_over_tau_pow"] < 10.0

    def test_slope_monotonicity(self, funk):
        phi = build_potential("squared_distance", funk, center=[0.1, 0.2]).with_certificate(0.5)
        sol = run_scheme(phi, funk, [0.4, -0.2], Partition.uniform(0.5, 0.05))
        rep = discrete_slope_monotonicity_check(phi, funk, sol)
        assert rep.passed, rep.to_dict()

    def test_slope_monotonicity_regime(self, randers):
        phi = build_potential("quadratic", randers, p=3.0).with_certificate(1.0)
        sol = run_scheme(phi, randers, X0, Partition.uniform(0.2, 0.1))
        with pytest.raises(ParameterError):
            discrete_slope_monotonicity_check(phi, randers, sol)

    def test_scheme_trajectory(self, euclid, quad):
        sol = run_scheme(quad, euclid, X0, Partition.uniform(0.5, 0.1))
        traj = scheme_trajectory(quad, euclid, sol)
        assert traj.provenance == "mms"
        assert np.allclose(traj.slope_values, np.linalg.norm(sol.xs, axis=1), atol=1e-6)


class TestLimit:
    def test_sup_distance_self(self, euclid, quad):
        sol = run_scheme(quad, euclid, X0, Partition.uniform(0.5, 0.1))
        traj = scheme_trajectory(quad, euclid, sol)
        assert sup_distance(euclid, traj, traj, np.linspace(0, 0.5, 101)) == 0.0

    def test_quadratic_sweep(self, euclid, quad):
        finest, rep = limit_trajectory(quad, euclid, X0, 1.0, [0.1, 0.05, 0.025])
        assert rep.monotone and rep.warning is None
        assert rep.cauchy_distances[0] > rep.cauchy_distances[1]
        ode = ode_oracle(quad, euclid, X0, 1.0, RKConfig(dt_out=1e-3))
        err = sup_distance(euclid, finest, ode, np.linspace(0, 1, 2001), mode=("constant", "linear"))
        assert err < 0.05

    def test_sweep_must_decrease(self, euclid, quad):
        with pytest.raises(ParameterError):
            limit_trajectory(quad, euclid, X0, 1.0, [0.01, 0.1])
