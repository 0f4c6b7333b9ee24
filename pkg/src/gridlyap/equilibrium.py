"""Stable equilibrium of the lossless swing equations.

The equilibrium angles solve ``sum_j B_kj V_k V_j sin(d_k - d_j) = P_k``.
Angles are only defined up to a uniform shift, so the last state generator
(or the infinite bus, when present) is pinned to angle 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import PowerNetwork

__all__ = [
    "Equilibrium",
    "EquilibriumError",
    "solve_equilibrium",
    "equilibrium_residual",
    "edge_differences",
    "power_jacobian",
    "linearization",
]


class EquilibriumError(RuntimeError):
    pass


@dataclass(frozen=True)
class Equilibrium:
    """Solved equilibrium.

    ``angles`` has one entry per state generator (radians);
    ``edge_deltas`` is aligned with ``net.edges``.
    """

    angles: np.ndarray
    edge_deltas: np.ndarray
    residual_norm: float
    iterations: int
    within_quarter_turn: bool

    @property
    def status(self) -> str:
        return "ok" if self.within_quarter_turn else "warning: some |delta*_kj| >= pi/2"


def edge_differences(net: PowerNetwork, angles) -> np.ndarray:
    """``delta_k - delta_j`` per edge, the infinite bus counting as angle 0."""
    return np.asarray(angles, dtype=float) @ net.incidence().T


def equilibrium_residual(net: PowerNetwork, angles) -> np.ndarray:
    """Per-generator mismatch ``sum_j B_kj V_k V_j sin(delta_kj) - P_k``."""
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (net.n,):
        raise ValueError(f"expected {net.n} angles, got shape {angles.shape}")
    inc = net.incidence()
    flows = net.edge_weights() * np.sin(inc @ angles)
    return inc.T @ flows - net.power()


def power_jacobian(net: PowerNetwork, angles) -> np.ndarray:
    """Jacobian of the electrical power injections with respect to the angles."""
    inc = net.incidence()
    w = net.edge_weights() * np.cos(inc @ np.asarray(angles, dtype=float))
    return inc.T @ (w[:, None] * inc)


def linearization(net: PowerNetwork, angles) -> np.ndarray:
    """State matrix of the swing dynamics linearized at ``angles``."""
    n = net.n
    m, d = net.inertia(), net.damping()
    jac = np.zeros((2 * n, 2 * n))
    jac[:n, n:] = np.eye(n)
    jac[n:, :n] = -power_jacobian(net, angles) / m[:, None]
    jac[n:, n:] = -np.diag(d / m)
    return jac


def _free_index(net: PowerNetwork) -> np.ndarray:
    # with an infinite bus every state generator is free
    if net.infinite_bus is not None:
        return np.arange(net.n)
    return np.arange(net.n - 1)


def newton(net: PowerNetwork, guess, max_iter: int = 100, tol: float = 1e-10):
    """Damped Newton iteration on the free angles.

    Returns ``(angles, residual_norm, iterations, converged)``; never raises on
    non-convergence so callers can use it as a multistart kernel.
    """
    free = _free_index(net)
    angles = np.array(guess, dtype=float)
    if net.infinite_bus is None:
        angles -= angles[-1]
    res = equilibrium_residual(net, angles)
    norm = np.max(np.abs(res))
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return angles, norm, it - 1, True
        jac = power_jacobian(net, angles)[np.ix_(free, free)]
        try:
            step = np.linalg.solve(jac, -res[free])
        except np.linalg.LinAlgError:
            return angles, norm, it, False
        if not np.all(np.isfinite(step)):
            return angles, norm, it, False
        lam = 1.0
        while lam > 1e-6:
            trial = angles.copy()
            trial[free] += lam * step
            trial_res = equilibrium_residual(net, trial)
            trial_norm = np.max(np.abs(trial_res))
            if trial_norm < norm:
                break
            lam *= 0.5
        else:
            return angles, norm, it, False
        angles, res, norm = trial, trial_res, trial_norm
    return angles, norm, max_iter, norm <= tol


def solve_equilibrium(
    net: PowerNetwork, guess=None, max_iter: int = 100, tol: float = 1e-10
) -> Equilibrium:
    """Solve for the operating point reached by damped Newton from ``guess``.

    Raises :class:`EquilibriumError` on non-convergence or when the converged
    point is not asymptotically stable (up to the uniform-rotation mode).
    """
    if guess is None:
        guess = np.zeros(net.n)
    guess = np.asarray(guess, dtype=float)
    if guess.shape != (net.n,):
        raise ValueError(f"guess must have {net.n} entries")
    angles, norm, iters, ok = newton(net, guess, max_iter=max_iter, tol=tol)
    if not ok:
        raise EquilibriumError(f"Newton did not converge (residual {norm:.3e} after {iters} iterations)")
    if not is_stable(net, angles):
        raise EquilibriumError("converged point is not a stable equilibrium")
    deltas = edge_differences(net, angles)
    quarter = bool(np.all(np.abs(deltas) < np.pi / 2))
    if not quarter:
        warnings.warn("equilibrium has an edge with |delta*_kj| >= pi/2", RuntimeWarning, stacklevel=2)
    return Equilibrium(angles, deltas, float(norm), iters, quarter)


def is_stable(net: PowerNetwork, angles, tol: float = 1e-9) -> bool:
    """No eigenvalue in the open right half plane; one zero mode without an infinite bus."""
    eig = np.linalg.eigvals(linearization(net, angles))
    if np.any(eig.real > tol):
        return False
    zeros = int(np.sum(np.abs(eig) < 1e-7))
    return zeros == (0 if net.infinite_bus is not None else 1)
