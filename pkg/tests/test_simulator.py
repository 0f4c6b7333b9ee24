import numpy as np
import pytest
from scipy.integrate import solve_ivp

from gridlyap.energy import energy_value
from gridlyap.simulator import converged_to, integrate, integrate_rk4, monitor_v
from gridlyap.state_space import rhs


class TestIntegrator:
    def test_matches_reference_solver(self, nine_bus):
        x0 = np.array([0.5, -0.3, 0.0, 0.2, 0.0, -0.1])
        traj = integrate(nine_bus, x0, horizon=10.0, stop_on_status=False)
        ref = solve_ivp(lambda t, y: rhs(nine_bus, y), (0, 10.0), x0, method="DOP853", rtol=1e-12, atol=1e-12)
        assert traj.times[-1] == pytest.approx(10.0)
        assert np.abs(traj.final_state - ref.y[:, -1]).max() < 1e-6

    def test_rk4_agrees(self, two_bus):
        x0 = np.array([0.8, 0.5])
        adaptive = integrate(two_bus, x0, horizon=5.0, stop_on_status=False)
        fixed = integrate_rk4(two_bus, x0, horizon=5.0, step=0.01)
        assert fixed.times[-1] == pytest.approx(5.0)
        assert np.abs(adaptive.final_state - fixed.final_state).max() < 1e-6

    def test_error_estimates_bounded(self, nine_bus):
        traj = integrate(nine_bus, np.full(6, 0.2), horizon=20.0)
        assert traj.accepted_steps == len(traj.times) - 1
        assert np.all(traj.error_norms <= 1.0)
        assert np.all(np.diff(traj.times) <= 0.5 + 1e-12)

    def test_energy_dissipation_balance(self, two_bus):
        # E(T) - E(0) equals minus the integral of d * omega^2
        net, eq = two_bus.network, two_bus.equilibrium
        x0 = np.array([0.6, 0.4])
        sol = solve_ivp(lambda t, y: rhs(two_bus, y), (0, 3.0), x0, rtol=1e-11, atol=1e-12, dense_output=True)
        traj = integrate(two_bus, x0, horizon=3.0, stop_on_status=False)
        ts = np.linspace(0, 3.0, 30001)
        loss = np.trapezoid(sol.sol(ts)[1] ** 2, ts)
        drop = energy_value(net, eq, traj.final_state) - energy_value(net, eq, x0)
        assert drop == pytest.approx(-loss, abs=1e-6)

    def test_bad_inputs(self, two_bus):
        with pytest.raises(ValueError):
            integrate(two_bus, np.zeros(3))
        with pytest.raises(ValueError):
            integrate(two_bus, np.zeros(2), rel_tol=0.0)
        with pytest.raises(ValueError):
            integrate_rk4(two_bus, np.zeros(2), step=0.0)


class TestStatus:
    def test_equilibrium_converges_after_dwell(self, two_bus):
        traj = integrate(two_bus, np.zeros(2))
        assert traj.status == "converged"
        assert traj.times[-1] == pytest.approx(5.0, abs=0.5)

    def test_small_disturbance_converges(self, models):
        for m in models.values():
            traj = integrate(m, np.concatenate([np.zeros(m.n), 0.3 * np.ones(m.n)]))
            assert traj.status == "converged"
            assert converged_to(traj, m.equilibrium, m)

    def test_large_kick_slips_poles(self, two_bus):
        # the first machine slips twice and settles two turns away
        traj = integrate(two_bus, np.array([0.0, 10.0]))
        assert traj.status == "horizon"
        assert traj.final_state[0] == pytest.approx(4 * np.pi, abs=1e-3)
        assert not converged_to(traj, two_bus.equilibrium, two_bus)

    def test_divergence(self, two_bus):
        traj = integrate(two_bus, np.array([0.0, 40.0]))
        assert traj.status == "diverged"
        assert abs(traj.final_state[0]) > 10 * np.pi - np.pi / 6

    def test_horizon(self, two_bus):
        traj = integrate(two_bus, np.array([1.0, 0.0]), horizon=1.0)
        assert traj.status == "horizon"


class TestMonitor:
    def test_nonincreasing_inside(self, two_bus, certificates):
        cert = certificates["two_bus"]
        traj = integrate(two_bus, np.array([0.8, 0.5]))
        mon = monitor_v(cert, two_bus, traj)
        assert mon.first_exit is None
        assert mon.nonincreasing
        assert mon.values[-1] < 1e-5

    def test_exit_reported(self, two_bus, certificates):
        traj = integrate(two_bus, np.array([0.0, 10.0]), horizon=5.0)
        mon = monitor_v(certificates["two_bus"], two_bus, traj)
        assert mon.first_exit is not None
