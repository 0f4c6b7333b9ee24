"""Classical energy function and the closest-UEP stability criterion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import Equilibrium, equilibrium_residual, linearization, newton
from .model import PowerNetwork

__all__ = [
    "EquilibriumPoint",
    "NoUepFound",
    "energy_value",
    "potential_energy",
    "find_ueps",
    "closest_uep_energy",
    "energy_landscape",
    "default_starts",
]


class NoUepFound(RuntimeError):
    pass


@dataclass(frozen=True)
class EquilibriumPoint:
    angles: np.ndarray
    kind: str
    relative_energy: float
    residual: float
    unstable_modes: int


def potential_energy(net: PowerNetwork, eq: Equilibrium, angles) -> np.ndarray:
    """Potential part of the energy relative to the SEP; ``angles`` may be a stack."""
    angles = np.asarray(angles, dtype=float)
    inc = net.incidence()
    delta = angles @ inc.T
    w = net.edge_weights()
    coupling = (np.cos(eq.edge_deltas) - np.cos(delta)) @ w
    return coupling - (angles - eq.angles) @ net.power()


def energy_value(net: PowerNetwork, eq: Equilibrium, x) -> np.ndarray | float:
    """Energy relative to the SEP at rest, for a state ``x = [angle deviations, velocities]``."""
    x = np.asarray(x, dtype=float)
    n = net.n
    kinetic = 0.5 * (x[..., n:] ** 2) @ net.inertia()
    value = kinetic + potential_energy(net, eq, eq.angles + x[..., :n])
    return float(value) if np.ndim(value) == 0 else value


def default_starts(net: PowerNetwork) -> int:
    return 500 if net.n <= 3 else 5000


def _canonical(net: PowerNetwork, angles):
    # wrap edge differences into (-pi, pi] so copies modulo 2*pi and shifts coincide
    delta = angles @ net.incidence().T
    wrapped = np.mod(delta + np.pi, 2 * np.pi) - np.pi
    # points within rounding of +pi belong with -pi
    return np.where(wrapped > np.pi - 1e-7, wrapped - 2 * np.pi, wrapped)


def find_ueps(
    net: PowerNetwork,
    eq: Equilibrium,
    n_starts: int | None = None,
    seed: int = 0,
    tol: float = 1e-9,
) -> list[EquilibriumPoint]:
    """Unstable equilibria found by damped Newton from random angle seeds.

    Points are deduplicated modulo ``2*pi`` and the uniform shift, and sorted by
    relative potential energy.  Each stored angle vector is the representative
    closest to the SEP.
    """
    if n_starts is None:
        n_starts = default_starts(net)
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    rng = np.random.default_rng(seed)
    found: dict[tuple, EquilibriumPoint] = {}
    sep_key = tuple(np.round(_canonical(net, eq.angles), 6))
    for _ in range(n_starts):
        guess = rng.uniform(-np.pi, np.pi, size=net.n)
        angles, norm, _, ok = newton(net, guess, max_iter=60, tol=tol)
        if not ok:
            continue
        # bring each angle to the copy nearest the SEP
        angles = eq.angles + np.mod(angles - eq.angles + np.pi, 2 * np.pi) - np.pi
        if net.infinite_bus is None:
            angles = angles - angles[-1] + eq.angles[-1]
        key = tuple(np.round(_canonical(net, angles), 6))
        if key == sep_key or key in found:
            continue
        eig = np.linalg.eigvals(linearization(net, angles))
        unstable = int(np.sum(eig.real > 1e-9))
        residual = float(np.max(np.abs(equilibrium_residual(net, angles))))
        found[key] = EquilibriumPoint(
            angles=angles,
            kind="uep" if unstable else "sep",
            relative_energy=float(potential_energy(net, eq, angles)),
            residual=residual,
            unstable_modes=unstable,
        )
    return sorted(found.values(), key=lambda p: p.relative_energy)


def closest_uep_energy(net: PowerNetwork, eq: Equilibrium, ueps=None, **kwargs) -> float:
    """Lowest relative energy among the unstable equilibria."""
    if ueps is None:
        ueps = find_ueps(net, eq, **kwargs)
    levels = [p.relative_energy for p in ueps if p.kind == "uep"]
    if not levels:
        raise NoUepFound("no unstable equilibrium found")
    return min(levels)


def energy_landscape(net: PowerNetwork, eq: Equilibrium, grid: int = 101, span: float = np.pi):
    """Potential energy on a grid of one or two angle coordinates.

    With a single free angle (one machine against an infinite bus, or two
    machines) the grid runs over that angle difference and a 1-D array is
    returned.  Otherwise the axes are ``delta_1 - delta_n`` and
    ``delta_2 - delta_n`` with the remaining machines held at the SEP, and the
    values form a ``grid x grid`` array.  Returns ``(axes, values)``.
    """
    if grid < 2:
        raise ValueError("grid needs at least two points")
    free = net.n if net.infinite_bus is not None else net.n - 1
    ref = 0.0 if net.infinite_bus is not None else eq.angles[-1]
    axis = np.linspace(-span, span, grid)
    if free == 1:
        angles = np.zeros((grid, net.n)) + eq.angles
        angles[:, 0] = ref + axis
        return (axis,), potential_energy(net, eq, angles)
    d1, d2 = np.meshgrid(axis, axis, indexing="ij")
    angles = np.zeros((grid, grid, net.n)) + eq.angles
    angles[..., 0] = ref + d1
    angles[..., 1] = ref + d2
    return (axis, axis), potential_energy(net, eq, angles)
