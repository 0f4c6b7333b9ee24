import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlyap.equilibrium import solve_equilibrium
from gridlyap.model import builtin_case
from gridlyap.state_space import (
    boundary_facets,
    build_state_space,
    enumerate_facets,
    in_polytope_p,
    in_polytope_q,
    nonlinearity_f,
    rhs,
    sector_bound_holds,
    swing_rhs,
)

from .conftest import CASES


class TestMatrices:
    def test_nine_bus_damping_block(self, nine_bus):
        n = nine_bus.n
        assert np.allclose(nine_bus.a_matrix[n:, n:], -0.5 * np.eye(3))
        assert np.array_equal(nine_bus.a_matrix[:n, n:], np.eye(3))
        assert not nine_bus.a_matrix[:n, :n].any()

    def test_nine_bus_incidence(self, nine_bus):
        assert np.array_equal(nine_bus.incidence_e, [[1, -1, 0], [1, 0, -1], [0, 1, -1]])

    @pytest.mark.parametrize("name", CASES)
    def test_cb_vanishes(self, models, name):
        m = models[name]
        assert np.abs(m.c_matrix @ m.b_matrix).max() < 1e-15

    def test_b_lower_block(self, nine_bus):
        n = nine_bus.n
        expected = np.linalg.inv(nine_bus.diag_m) @ nine_bus.incidence_e.T @ np.diag(nine_bus.edge_weights)
        assert np.allclose(nine_bus.b_matrix[n:], expected)
        assert not nine_bus.b_matrix[:n].any()

    def test_dimension_mismatch(self):
        net = builtin_case("nine_bus")
        eq = solve_equilibrium(builtin_case("two_bus"))
        with pytest.raises(ValueError):
            build_state_space(net, eq)


class TestDynamics:
    def test_equilibrium_is_stationary(self, models):
        for m in models.values():
            x = np.zeros(m.dim)
            assert not nonlinearity_f(m, x).any()
            assert not rhs(m, x).any()

    def test_two_bus_supplementary_angle(self, two_bus):
        x = np.array([np.pi - 2 * np.pi / 6, 0.0])
        assert abs(nonlinearity_f(two_bus, x)[0]) < 1e-15

    def test_two_bus_velocity_only(self, two_bus):
        omega = 0.7
        assert np.allclose(rhs(two_bus, np.array([0.0, omega])), [omega, -omega])

    @pytest.mark.parametrize("name", CASES)
    def test_matches_componentwise_swing_equation(self, models, name):
        m = models[name]
        rng = np.random.default_rng(0)
        xs = rng.normal(scale=1.5, size=(1000, m.dim))
        fast = rhs(m, xs)
        err = max(np.abs(fast[i] - swing_rhs(m.network, m.equilibrium, xs[i])).max() for i in range(len(xs)))
        assert err < 1e-12

    def test_nonlinearity_jacobian(self, nine_bus):
        m = nine_bus
        x = 1e-6 * np.random.default_rng(1).normal(size=m.dim)
        lin = np.cos(m.delta_star) * (m.c_matrix @ x)
        assert np.allclose(nonlinearity_f(m, x), lin, atol=1e-11)

    @pytest.mark.parametrize("name", CASES)
    def test_linearization_consistency(self, models, name):
        m = models[name]
        h = 1e-6
        jac = np.column_stack([(rhs(m, h * e) - rhs(m, -h * e)) / (2 * h) for e in np.eye(m.dim)])
        expected = m.a_matrix - m.b_matrix @ np.diag(np.cos(m.delta_star)) @ m.c_matrix
        assert np.abs(jac - expected).max() < 1e-6


class TestSectorBound:
    def test_examples(self):
        ds = np.pi / 6
        holds, lower, upper = sector_bound_holds(ds, ds)
        assert holds and lower == 0 and upper == 0
        holds, lower, _ = sector_bound_holds(np.pi - ds, ds)
        assert holds and abs(lower) < 1e-15
        holds, _, _ = sector_bound_holds(np.pi, ds)
        assert not holds

    @pytest.mark.parametrize("ds", [0.0, np.pi / 6, -np.pi / 6, 0.49 * np.pi, -0.49 * np.pi])
    def test_dense_grid(self, ds):
        for delta in np.linspace(-np.pi - ds, np.pi - ds, 4001):
            holds, lower, upper = sector_bound_holds(delta, ds)
            assert holds
            assert -1e-12 <= lower <= upper + 1e-12

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-0.49 * np.pi, 0.49 * np.pi), st.floats(0, 1))
    def test_property(self, ds, u):
        delta = -np.pi - ds + u * 2 * np.pi
        holds, lower, upper = sector_bound_holds(delta, ds)
        if holds:
            assert -1e-12 <= lower <= upper + 1e-12


class TestPolytope:
    def test_equilibrium_inside(self, models):
        for m in models.values():
            assert in_polytope_p(m, np.zeros(m.dim))
            assert in_polytope_q(m, np.zeros(m.dim))

    def test_flow_classification(self, two_bus):
        on_face = np.pi - 2 * np.pi / 6
        out = boundary_facets(two_bus, np.array([on_face, 1.0]))
        assert [(f.sign, f.flow_direction) for f in out] == [(1, "out")]
        back = boundary_facets(two_bus, np.array([on_face, -1.0]))
        assert [(f.sign, f.flow_direction) for f in back] == [(1, "in")]
        # a tie counts as flow-out
        tie = boundary_facets(two_bus, np.array([on_face, 0.0]))
        assert tie[0].flow_direction == "out"
        assert not in_polytope_p(two_bus, np.array([on_face, 0.0]))

    def test_enumerate(self, nine_bus):
        facets = enumerate_facets(nine_bus)
        assert len(facets) == 4 * nine_bus.n_edges
        assert all(-2 * np.pi < f.angle < 2 * np.pi for f in facets)

    def test_batch_membership(self, nine_bus):
        xs = np.zeros((3, nine_bus.dim))
        xs[1, 0] = 4.0
        assert list(in_polytope_p(nine_bus, xs)) == [True, False, True]
