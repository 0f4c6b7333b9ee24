import numpy as np
import pytest
from scipy.optimize import approx_fprime

from gridlyap.energy import (
    NoUepFound,
    closest_uep_energy,
    default_starts,
    energy_landscape,
    energy_value,
    find_ueps,
    potential_energy,
)
from gridlyap.equilibrium import equilibrium_residual, solve_equilibrium
from gridlyap.model import GeneratorParams, builtin_case, make_network


@pytest.fixture(scope="module")
def two_bus_net():
    net = builtin_case("two_bus")
    return net, solve_equilibrium(net)


@pytest.fixture(scope="module")
def nine_bus_net():
    net = builtin_case("nine_bus")
    return net, solve_equilibrium(net)


class TestEnergyFunction:
    def test_zero_at_equilibrium(self, nine_bus_net):
        net, eq = nine_bus_net
        assert energy_value(net, eq, np.zeros(2 * net.n)) == 0.0

    def test_gradient_is_mismatch(self, nine_bus_net):
        # the power mismatch is the gradient of the potential
        net, eq = nine_bus_net
        for angles in np.random.default_rng(0).uniform(-2, 2, size=(5, net.n)):
            grad = approx_fprime(angles, lambda a: potential_energy(net, eq, a), 1e-7)
            assert np.allclose(grad, equilibrium_residual(net, angles), atol=1e-5)

    def test_kinetic_part(self, two_bus_net):
        net, eq = two_bus_net
        assert energy_value(net, eq, np.array([0.0, 2.0])) == pytest.approx(2.0)

    def test_batch(self, nine_bus_net):
        net, eq = nine_bus_net
        xs = np.random.default_rng(1).normal(size=(4, 2 * net.n))
        assert np.allclose(energy_value(net, eq, xs), [energy_value(net, eq, x) for x in xs])


class TestUeps:
    def test_two_bus_saddle(self, two_bus_net):
        net, eq = two_bus_net
        ueps = find_ueps(net, eq)
        assert len(ueps) == 1
        assert ueps[0].angles[0] == pytest.approx(5 * np.pi / 6, abs=1e-8)
        assert ueps[0].unstable_modes == 1
        assert closest_uep_energy(net, eq, ueps) == pytest.approx(0.5478826, abs=1e-6)

    def test_zero_power_antipodal(self):
        gens = [GeneratorParams(1, 1, 1, 1, 0.0), GeneratorParams(2, 0, 0, 1, 0.0)]
        net = make_network(gens, [(1, 2, 1.0)], infinite_bus=2)
        eq = solve_equilibrium(net)
        ueps = find_ueps(net, eq)
        assert len(ueps) == 1
        assert abs(ueps[0].angles[0]) == pytest.approx(np.pi, abs=1e-8)
        assert ueps[0].relative_energy == pytest.approx(2.0)

    def test_nine_bus(self, nine_bus_net):
        net, eq = nine_bus_net
        ueps = find_ueps(net, eq)
        assert all(p.residual < 1e-8 for p in ueps)
        energies = [p.relative_energy for p in ueps]
        assert energies == sorted(energies)
        assert closest_uep_energy(net, eq, ueps) == pytest.approx(3.2478, abs=1e-3)
        # distinct modulo 2 pi and the uniform shift
        keys = {tuple(np.round(np.mod(p.angles @ net.incidence().T + np.pi, 2 * np.pi), 5)) for p in ueps}
        assert len(keys) == len(ueps)

    def test_closest_is_saddle(self, nine_bus_net):
        net, eq = nine_bus_net
        ueps = [p for p in find_ueps(net, eq) if p.kind == "uep"]
        assert ueps[0].unstable_modes == 1

    def test_starts(self, two_bus_net, nine_bus_net):
        assert default_starts(two_bus_net[0]) == 500
        assert default_starts(builtin_case("new_england_39")) == 5000
        with pytest.raises(ValueError):
            find_ueps(*two_bus_net, n_starts=0)

    def test_no_uep(self, two_bus_net):
        with pytest.raises(NoUepFound):
            closest_uep_energy(*two_bus_net, ueps=[])


class TestLandscape:
    def test_one_dimensional(self, two_bus_net):
        net, eq = two_bus_net
        (axis,), values = energy_landscape(net, eq, grid=201)
        assert values.shape == (201,)
        assert values.min() == pytest.approx(0.0, abs=1e-3)
        assert axis[np.argmin(values)] == pytest.approx(np.pi / 6, abs=0.05)

    def test_two_dimensional(self, nine_bus_net):
        net, eq = nine_bus_net
        axes, values = energy_landscape(net, eq, grid=21)
        assert len(axes) == 2 and values.shape == (21, 21)
        assert values.min() >= -1e-2

    def test_grid_checked(self, two_bus_net):
        with pytest.raises(ValueError):
            energy_landscape(*two_bus_net, grid=1)
