"""Post-fault trajectory integration and Lyapunov monitoring along trajectories.

The adaptive integrator is the Dormand-Prince 5(4) embedded pair with
first-same-as-last stepping and an elementary step-size controller; a fixed-step
classical RK4 mode is kept as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import Equilibrium
from .lyapunov import Certificate, evaluate_v_shifted
from .state_space import StateSpaceModel, actual_differences, in_polytope_p, rhs

__all__ = [
    "Trajectory",
    "StepSizeUnderflow",
    "integrate",
    "integrate_rk4",
    "monitor_v",
    "VMonitor",
    "converged_to",
    "CONVERGENCE_BAND",
    "CONVERGENCE_DWELL",
]

CONVERGENCE_BAND = 1e-3
CONVERGENCE_DWELL = 5.0
DIVERGENCE_ANGLE = 10 * np.pi

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class StepSizeUnderflow(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted integration points and the run's terminal status.

    ``error_norms[i]`` is the scaled local error estimate of the step that
    produced ``states[i + 1]`` (at most 1 for an accepted adaptive step).
    """

    times: np.ndarray
    states: np.ndarray
    status: str
    accepted_steps: int
    rejected_steps: int
    error_norms: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _settled(model, x):
    # edge deviations rather than raw angles so the uniform rotation mode is ignored
    dev = x[: model.n] @ model.incidence_e.T
    return max(np.max(np.abs(dev)), np.max(np.abs(x[model.n :]))) < CONVERGENCE_BAND


def _diverged(model, x):
    return bool(np.any(np.abs(actual_differences(model, x)) > DIVERGENCE_ANGLE))


class _Status:
    """Tracks the convergence dwell and divergence along accepted points."""

    def __init__(self, model, t0):
        self.model = model
        self.settled_since = None
        self.t0 = t0

    def update(self, t, x):
        if _diverged(self.model, x):
            return "diverged"
        if _settled(self.model, x):
            if self.settled_since is None:
                self.settled_since = t
            if t - self.settled_since >= CONVERGENCE_DWELL:
                return "converged"
        else:
            self.settled_since = None
        return None


def integrate(
    model: StateSpaceModel,
    x0,
    horizon: float = 200.0,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
    max_step: float = 0.5,
    stop_on_status: bool = True,
) -> Trajectory:
    """Adaptive Dormand-Prince integration of the swing dynamics from ``x0``.

    Terminal status is ``converged`` once edge-angle deviations and velocities
    stay below 1e-3 for 5 time units, ``diverged`` when an angle difference
    exceeds 10*pi, and ``horizon`` otherwise.
    """
    if not (rel_tol > 0 and abs_tol > 0):
        raise ValueError("tolerances must be positive")
    x = np.array(x0, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"state must have {model.dim} entries")

    def f(y):
        return rhs(model, y)

    t = 0.0
    times, states, errs = [t], [x.copy()], []
    tracker = _Status(model, t)
    status = tracker.update(t, x)
    accepted = rejected = 0
    k1 = f(x)
    scale0 = abs_tol + rel_tol * np.abs(x)
    d0, d1 = np.linalg.norm(x / scale0), np.linalg.norm(k1 / scale0)
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(h, max_step, horizon)
    min_step = 1e-14 * max(1.0, horizon)
    while t < horizon and not (status and stop_on_status):
        h = min(h, horizon - t)
        ks = [k1]
        for i in range(1, 7):
            ks.append(f(x + h * np.dot(_A[i], ks[:i])))
        x_new = x + h * np.dot(_B5[:6], ks[:6])
        err = h * np.dot(_E, ks)
        scale = abs_tol + rel_tol * np.maximum(np.abs(x), np.abs(x_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if err_norm <= 1.0:
            t += h
            x = x_new
            k1 = ks[6]
            accepted += 1
            times.append(t)
            states.append(x.copy())
            errs.append(err_norm)
            status = tracker.update(t, x) or status
            factor = 5.0 if err_norm == 0 else min(5.0, 0.9 * err_norm ** -0.2)
        else:
            rejected += 1
            factor = max(0.2, 0.9 * err_norm ** -0.2)
        h = min(h * factor, max_step)
        if h < min_step:
            raise StepSizeUnderflow(f"step size {h:.3e} underflow at t = {t:.6g}")
    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        status=status or "horizon",
        accepted_steps=accepted,
        rejected_steps=rejected,
        error_norms=np.array(errs),
        info={"method": "dopri5", "rel_tol": rel_tol, "abs_tol": abs_tol},
    )


def integrate_rk4(model: StateSpaceModel, x0, horizon: float = 200.0, step: float = 0.01) -> Trajectory:
    """Fixed-step classical Runge-Kutta integration (cross-check mode)."""
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.array(x0, dtype=float)
    count = int(np.ceil(horizon / step))
    times, states = [0.0], [x.copy()]
    tracker = _Status(model, 0.0)
    status = tracker.update(0.0, x)
    t = 0.0
    for _ in range(count):
        if status:
            break
        k1 = rhs(model, x)
        k2 = rhs(model, x + 0.5 * step * k1)
        k3 = rhs(model, x + 0.5 * step * k2)
        k4 = rhs(model, x + step * k3)
        x = x + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += step
        times.append(t)
        states.append(x.copy())
        status = tracker.update(t, x)
    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        status=status or "horizon",
        accepted_steps=len(times) - 1,
        rejected_steps=0,
        error_norms=np.zeros(len(times) - 1),
        info={"method": "rk4", "step": step},
    )


@dataclass(frozen=True)
class VMonitor:
    values: np.ndarray
    first_exit: int | None
    nonincreasing: bool


def monitor_v(cert: Certificate, model: StateSpaceModel, traj: Trajectory, tol: float = 1e-6) -> VMonitor:
    """Shifted Lyapunov values along a trajectory.

    ``nonincreasing`` is judged on the prefix before the first state outside P.
    """
    if len(traj.states) == 0:
        raise ValueError("empty trajectory")
    values = np.asarray(evaluate_v_shifted(cert, model, traj.states))
    inside = np.asarray(in_polytope_p(model, traj.states))
    exits = np.flatnonzero(~inside)
    first_exit = int(exits[0]) if exits.size else None
    prefix = values[: first_exit] if first_exit is not None else values
    ok = bool(np.all(np.diff(prefix) <= tol))
    return VMonitor(values, first_exit, ok)


def converged_to(traj: Trajectory, eq: Equilibrium, model: StateSpaceModel, tol: float = 1e-3) -> bool:
    """Converged status and final edge angle differences within ``tol`` of the equilibrium."""
    if traj.status != "converged":
        return False
    final = actual_differences(model, traj.final_state)
    return bool(np.max(np.abs(final - eq.edge_deltas)) < tol)
