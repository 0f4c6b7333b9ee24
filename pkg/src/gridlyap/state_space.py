"""Compact state-space form ``x' = A x - B F(C x)`` and the polytope geometry.

State ``x = [x1, x2]`` holds angle deviations from equilibrium and angular
velocities.  ``C x`` are edge-wise angle-difference deviations; all polytope
and sector tests are phrased in *actual* differences
``delta_kj = delta*_kj + (C x)_kj`` (see :func:`actual_differences`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import Equilibrium, solve_equilibrium
from .model import PowerNetwork

__all__ = [
    "StateSpaceModel",
    "PolytopeFacet",
    "build_state_space",
    "nonlinearity_f",
    "rhs",
    "swing_rhs",
    "actual_differences",
    "sector_bound_holds",
    "in_polytope_p",
    "in_polytope_q",
    "enumerate_facets",
    "boundary_facets",
]


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    a_matrix: np.ndarray
    b_matrix: np.ndarray
    c_matrix: np.ndarray
    incidence_e: np.ndarray
    diag_m: np.ndarray
    diag_d: np.ndarray
    edge_weights: np.ndarray
    equilibrium: Equilibrium
    network: PowerNetwork

    @property
    def n(self) -> int:
        return self.incidence_e.shape[1]

    @property
    def n_edges(self) -> int:
        return self.incidence_e.shape[0]

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def delta_star(self) -> np.ndarray:
        """Equilibrium angle differences per edge."""
        return self.equilibrium.edge_deltas


@dataclass(frozen=True)
class PolytopeFacet:
    """Boundary piece of P where ``delta_kj = sign*pi - delta*_kj``.

    ``flow_direction`` is ``"out"`` on the part with ``delta_kj * d/dt delta_kj >= 0``.
    """

    edge: tuple[int, int]
    edge_index: int
    sign: int
    angle: float
    flow_direction: str


def build_state_space(net: PowerNetwork, eq: Equilibrium | None = None) -> StateSpaceModel:
    if eq is None:
        eq = solve_equilibrium(net)
    n = net.n
    if eq.angles.shape != (n,) or eq.edge_deltas.shape != (net.n_edges,):
        raise ValueError("equilibrium dimensions do not match the network")
    m, d = net.inertia(), net.damping()
    inc = net.incidence()
    w = net.edge_weights()
    a = np.zeros((2 * n, 2 * n))
    a[:n, n:] = np.eye(n)
    a[n:, n:] = -np.diag(d / m)
    b = np.zeros((2 * n, net.n_edges))
    b[n:, :] = (inc.T * w) / m[:, None]
    c = np.hstack([inc, np.zeros_like(inc)])
    return StateSpaceModel(a, b, c, inc, np.diag(m), np.diag(d), w, eq, net)


def actual_differences(model: StateSpaceModel, x) -> np.ndarray:
    """Edge angle differences ``delta_kj`` for state(s) ``x`` (last axis = state)."""
    x = np.asarray(x, dtype=float)
    return model.delta_star + x[..., : model.n] @ model.incidence_e.T


def nonlinearity_f(model: StateSpaceModel, x) -> np.ndarray:
    return np.sin(actual_differences(model, x)) - np.sin(model.delta_star)


def rhs(model: StateSpaceModel, x) -> np.ndarray:
    """Vector field ``A x - B F(C x)``; accepts a single state or a stack."""
    x = np.asarray(x, dtype=float)
    return x @ model.a_matrix.T - nonlinearity_f(model, x) @ model.b_matrix.T


def swing_rhs(net: PowerNetwork, eq: Equilibrium, x) -> np.ndarray:
    """Direct component-wise evaluation of the second-order swing equations.

    Kept independent of the matrix form as a cross-check.
    """
    n = net.n
    ids = [g.id for g in net.state_generators]
    angle = dict(zip(ids, eq.angles + x[:n]))
    if net.infinite_bus is not None:
        angle[net.infinite_bus] = 0.0
    out = np.empty(2 * n)
    out[:n] = x[n:]
    for i, g in enumerate(net.state_generators):
        coupling = 0.0
        for (k, j), b in zip(net.edges, net.susceptance_b):
            if g.id not in (k, j):
                continue
            other = j if g.id == k else k
            vv = b * g.voltage_v * net.generator(other).voltage_v
            coupling += vv * np.sin(angle[g.id] - angle[other])
        out[n + i] = (g.power_p - g.damping_d * x[n + i] - coupling) / g.inertia_m
    return out


def sector_bound_holds(delta_kj: float, delta_star_kj: float):
    """Check ``|d + d*| <= pi`` and return ``(holds, lower, upper)``.

    ``lower = (d - d*)(sin d - sin d*)`` and ``upper = (d - d*)**2``; inside the
    sector ``0 <= lower <= upper``.
    """
    diff = delta_kj - delta_star_kj
    lower = diff * (np.sin(delta_kj) - np.sin(delta_star_kj))
    upper = diff * diff
    holds = bool(abs(delta_kj + delta_star_kj) <= np.pi)
    return holds, float(lower), float(upper)


def in_polytope_p(model: StateSpaceModel, x) -> np.ndarray | bool:
    """Strict membership ``|delta_kj + delta*_kj| < pi`` on every edge."""
    delta = actual_differences(model, x)
    inside = np.all(np.abs(delta + model.delta_star) < np.pi, axis=-1)
    return bool(inside) if np.ndim(inside) == 0 else inside


def in_polytope_q(model: StateSpaceModel, x) -> np.ndarray | bool:
    """Membership ``|delta_kj| <= pi/2`` on every edge (region where V is convex)."""
    delta = actual_differences(model, x)
    inside = np.all(np.abs(delta) <= np.pi / 2, axis=-1)
    return bool(inside) if np.ndim(inside) == 0 else inside


def enumerate_facets(model: StateSpaceModel) -> list[PolytopeFacet]:
    """All boundary pieces of P: two faces per edge, each split into out/in parts."""
    edges = model.network.edges
    facets = []
    for idx, edge in enumerate(edges):
        for sign in (1, -1):
            angle = sign * np.pi - model.delta_star[idx]
            for flow in ("out", "in"):
                facets.append(PolytopeFacet(edge, idx, sign, float(angle), flow))
    return facets


def boundary_facets(model: StateSpaceModel, x, tol: float = 1e-9) -> list[PolytopeFacet]:
    """Facets of P that state ``x`` lies on, classified by the sign of ``delta * delta'``.

    A tie ``delta * delta' == 0`` counts as flow-out.
    """
    x = np.asarray(x, dtype=float)
    delta = actual_differences(model, x)
    rate = model.incidence_e @ x[model.n :]
    hits = []
    for idx, edge in enumerate(model.network.edges):
        for sign in (1, -1):
            angle = sign * np.pi - model.delta_star[idx]
            if abs(delta[idx] - angle) <= tol:
                flow = "out" if delta[idx] * rate[idx] >= 0 else "in"
                hits.append(PolytopeFacet(edge, idx, sign, float(angle), flow))
    return hits
