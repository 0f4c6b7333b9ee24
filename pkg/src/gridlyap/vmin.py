"""Critical Lyapunov levels on the boundary of P and invariant-set membership.

Three estimators of the level below which a sublevel set of ``V_shifted``
cannot leave P:

* ``exact``: minimum of ``V_shifted`` over the flow-out parts of the facets
  ``delta_kj = +-pi - delta*_kj`` (nonconvex, multistart);
* ``convex``: minimum over the facets ``|delta_kj| = pi/2`` of Q, where the
  shifted function is convex; the flow sign is dropped;
* ``approx``: a closed-form per-facet lower bound that keeps only the quadratic
  term and the crossing edge's potential.

All values use the shifted convention of
:func:`gridlyap.lyapunov.evaluate_v_shifted`.

On a facet the velocities enter only through the quadratic term, so they are
eliminated in closed form: with ``G = Q22^-1`` the unconstrained optimum is
``x2* = -G Q12' x1`` and the flow-out half-space ``s * E_e x2 >= 0`` adds
``min(0, s E_e x2*)^2 / (2 E_e G E_e')``.  The remaining search is over the
facet's angle coordinates only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .lyapunov import Certificate, evaluate_v_shifted, potential_gap
from .state_space import (
    PolytopeFacet,
    StateSpaceModel,
    in_polytope_p,
    in_polytope_q,
)

__all__ = [
    "VminResult",
    "vmin_exact",
    "vmin_convex",
    "vmin_approx",
    "g_of_v",
    "vmin_bisection",
    "facet_lower_bounds",
    "in_invariant_set",
    "sample_invariant_set",
    "ESTIMATORS",
]

ESTIMATORS = ("exact", "convex", "approx")


@dataclass(frozen=True, eq=False)
class VminResult:
    """A critical level together with where it was attained.

    ``status`` is ``"converged"`` or ``"degraded"``; a degraded exact value is
    only an upper bound on the true minimum and must not certify.
    """

    value: float
    estimator: str
    witness: np.ndarray | None = None
    facet: PolytopeFacet | None = None
    status: str = "converged"
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        facet = None
        if self.facet is not None:
            facet = {
                "edge": list(self.facet.edge),
                "sign": self.facet.sign,
                "angle": self.facet.angle,
                "flow_direction": self.facet.flow_direction,
            }
        return {
            "value": self.value,
            "estimator": self.estimator,
            "witness": None if self.witness is None else self.witness.tolist(),
            "facet": facet,
            "status": self.status,
        }


class _Reduced:
    """Velocity-eliminated pieces of a certificate: ``S``, ``G`` and ``Q12``."""

    def __init__(self, cert: Certificate, model: StateSpaceModel):
        n = model.n
        q = cert.q_matrix
        q12, q22 = q[:n, n:], q[n:, n:]
        self.g = np.linalg.inv(q22)
        self.q12 = q12
        self.s = q[:n, :n] - q12 @ self.g @ q12.T
        self.s = 0.5 * (self.s + self.s.T)
        # x2* = T x1
        self.t = -self.g @ q12.T
        self.cert = cert
        self.model = model

    def phi0(self, x1):
        """Shifted V minimized over the velocities, no flow constraint."""
        x = np.concatenate([x1, np.zeros(self.model.n)])
        pot = potential_gap(self.model, x) @ self.cert.k_diag
        return 0.5 * x1 @ self.s @ x1 + pot

    def phi0_grad(self, x1):
        model = self.model
        delta = model.delta_star + model.incidence_e @ x1
        dpot = model.incidence_e.T @ (self.cert.k_diag * (np.sin(delta) - np.sin(model.delta_star)))
        return self.s @ x1 + dpot

    def x2_star(self, x1):
        return self.t @ x1


def _face(model: StateSpaceModel, edge_index: int, sign: int, half: bool):
    """Affine parametrization ``x1 = base + N y`` of a facet and its slab bounds.

    ``half`` selects the Q facets ``delta_e = s*pi/2`` (bounds ``|delta| <= pi/2``)
    instead of the P facets ``delta_e = s*pi - delta*_e``.
    """
    e = model.incidence_e
    ds = model.delta_star
    row = e[edge_index]
    if half:
        target = sign * np.pi / 2 - ds[edge_index]
        lo, hi = -np.pi / 2 - ds, np.pi / 2 - ds
    else:
        target = sign * np.pi - 2 * ds[edge_index]
        lo, hi = -np.pi - 2 * ds, np.pi - 2 * ds
    base = row * target / (row @ row)
    basis = scipy.linalg.null_space(row[None, :])
    others = np.delete(np.arange(model.n_edges), edge_index)
    return base, basis, others, lo[others], hi[others]


def _slab_constraints(model, basis, base, others, lo, hi):
    if len(others) == 0 or basis.shape[1] == 0:
        return []
    rows = model.incidence_e[others] @ basis
    off = model.incidence_e[others] @ base
    return [
        {"type": "ineq", "fun": lambda y: rows @ y + off - lo, "jac": lambda y: rows},
        {"type": "ineq", "fun": lambda y: hi - rows @ y - off, "jac": lambda y: -rows},
    ]


def _seeds(model, base, basis, n_starts, rng):
    """Zero-offset seed, the equilibrium's projection, then uniform random seeds."""
    k = basis.shape[1]
    seeds = [np.zeros(k)]
    if n_starts > 1:
        seeds.append(-basis.T @ base)
    while len(seeds) < n_starts:
        raw = rng.uniform(-np.pi, np.pi, size=model.n)
        seeds.append(basis.T @ (raw - base))
    return seeds


def _minimize_face(fun, jac, base, basis, cons, seeds):
    """Best feasible local minimum over the seeds; returns ``(value, x1, converged)``."""
    if basis.shape[1] == 0:
        return float(fun(base)), base.copy(), True
    best, best_x, ok = np.inf, None, False
    for y0 in seeds:
        res = minimize(
            lambda y: fun(base + basis @ y),
            y0,
            jac=lambda y: basis.T @ jac(base + basis @ y),
            method="SLSQP",
            constraints=cons,
            options={"maxiter": 500, "ftol": 1e-10},
        )
        y = res.x
        if cons and min(np.min(c["fun"](y)) for c in cons) < -1e-7:
            continue
        val = float(fun(base + basis @ y))
        if val < best:
            best, best_x = val, base + basis @ y
        ok = ok or bool(res.success)
    return best, best_x, ok


def facet_lower_bounds(cert: Certificate, model: StateSpaceModel) -> list[tuple[float, int, int]]:
    """Closed-form lower bound on ``V_shifted`` over each face ``(edge, sign)`` of P.

    The bound drops the potential of every other edge (nonnegative on the
    closure of P) and minimizes the quadratic over the whole hyperplane.  When
    ``Q`` is singular the quadratic bound is taken as zero.
    """
    ds = model.delta_star
    q = cert.q_matrix
    invertible = np.linalg.eigvalsh(q).min() > 0
    out = []
    for idx in range(model.n_edges):
        c_row = model.c_matrix[idx]
        quad_den = float(c_row @ np.linalg.solve(q, c_row)) if invertible else np.inf
        for sign in (1, -1):
            dev = sign * np.pi - 2 * ds[idx]
            theta = sign * np.pi - ds[idx]
            gap = np.cos(ds[idx]) + ds[idx] * np.sin(ds[idx]) - np.cos(theta) - theta * np.sin(ds[idx])
            quad = dev * dev / (2 * quad_den) if invertible else 0.0
            out.append((quad + cert.k_diag[idx] * gap, idx, sign))
    return out


def vmin_approx(cert: Certificate, model: StateSpaceModel) -> VminResult:
    """Cheapest estimator: the smallest closed-form facet lower bound."""
    q = cert.q_matrix
    if np.linalg.eigvalsh(q).min() <= 0:
        raise ValueError("approximate estimator needs an invertible Q")
    bounds = facet_lower_bounds(cert, model)
    value, idx, sign = min(bounds)
    c_row = model.c_matrix[idx]
    qinv_c = np.linalg.solve(q, c_row)
    dev = sign * np.pi - 2 * model.delta_star[idx]
    witness = qinv_c * dev / (c_row @ qinv_c)
    facet = PolytopeFacet(
        model.network.edges[idx], idx, sign, float(sign * np.pi - model.delta_star[idx]), "out"
    )
    return VminResult(float(value), "approx", witness, facet, "converged")


def _flow_penalty(red: _Reduced, a, sign):
    gaga = float(a @ red.g @ a)
    coef = sign * (a @ red.t)

    def fun(x1):
        w = coef @ x1
        return red.phi0(x1) + 0.5 * min(0.0, w) ** 2 / gaga

    def jac(x1):
        w = coef @ x1
        return red.phi0_grad(x1) + min(0.0, w) * coef / gaga

    return fun, jac


def _full_state(red: _Reduced, x1, a=None, sign=None):
    x2 = red.x2_star(x1)
    if a is not None:
        w = sign * (a @ x2)
        if w < 0:
            x2 = x2 - w * sign * (red.g @ a) / (a @ red.g @ a)
    return np.concatenate([x1, x2])


def vmin_exact(
    cert: Certificate,
    model: StateSpaceModel,
    n_starts: int = 20,
    seed: int = 0,
) -> VminResult:
    """Minimum of ``V_shifted`` over the flow-out boundary of P.

    Faces are visited in order of their closed-form lower bound and skipped
    once that bound exceeds the best value found (branch and bound).
    """
    rng = np.random.default_rng(seed)
    red = _Reduced(cert, model)
    bounds = sorted(facet_lower_bounds(cert, model))
    best, best_x, best_face = np.inf, None, None
    all_ok, visited, minima = True, 0, []
    for lower, idx, sign in bounds:
        if lower >= best:
            break
        visited += 1
        base, basis, others, lo, hi = _face(model, idx, sign, half=False)
        a = model.incidence_e[idx]
        fun, jac = _flow_penalty(red, a, sign)
        cons = _slab_constraints(model, basis, base, others, lo, hi)
        seeds = _seeds(model, base, basis, n_starts, rng)
        val, x1, ok = _minimize_face(fun, jac, base, basis, cons, seeds)
        all_ok = all_ok and ok
        if x1 is not None:
            minima.append((val, _full_state(red, x1, a, sign)))
            if val < best:
                best, best_x, best_face = val, x1, (idx, sign)
    info = {"faces_visited": visited, "face_minima": minima}
    if best_x is None:
        return VminResult(np.inf, "exact", None, None, "degraded", info)
    idx, sign = best_face
    witness = _full_state(red, best_x, model.incidence_e[idx], sign)
    facet = PolytopeFacet(
        model.network.edges[idx], idx, sign, float(sign * np.pi - model.delta_star[idx]), "out"
    )
    status = "converged" if all_ok else "degraded"
    return VminResult(float(best), "exact", witness, facet, status, info)


def vmin_convex(cert: Certificate, model: StateSpaceModel, n_starts: int = 3, seed: int = 0) -> VminResult:
    """Minimum of ``V_shifted`` over the facets ``|delta_kj| = pi/2`` of Q.

    The objective is convex on each facet, so a few starts suffice; the flow
    sign is ignored, which can only lower the value.
    """
    if np.any(np.abs(model.delta_star) >= np.pi / 2):
        raise ValueError("convex estimator needs |delta*_kj| < pi/2 on every edge")
    rng = np.random.default_rng(seed)
    red = _Reduced(cert, model)
    best, best_x, best_face, all_ok = np.inf, None, None, True
    for idx in range(model.n_edges):
        for sign in (1, -1):
            base, basis, others, lo, hi = _face(model, idx, sign, half=True)
            cons = _slab_constraints(model, basis, base, others, lo, hi)
            seeds = _seeds(model, base, basis, n_starts, rng)
            val, x1, ok = _minimize_face(red.phi0, red.phi0_grad, base, basis, cons, seeds)
            all_ok = all_ok and ok
            if x1 is not None and val < best:
                best, best_x, best_face = val, x1, (idx, sign)
    if best_x is None:
        raise RuntimeError("convex facet minimization failed on every facet")
    idx, sign = best_face
    facet = PolytopeFacet(model.network.edges[idx], idx, sign, float(sign * np.pi / 2), "out")
    status = "converged" if all_ok else "degraded"
    return VminResult(float(best), "convex", _full_state(red, best_x), facet, status)


def g_of_v(
    cert: Certificate,
    model: StateSpaceModel,
    v: float,
    n_starts: int = 10,
    seed: int = 0,
) -> float:
    """Largest ``delta_kj * d/dt delta_kj`` over boundary states with ``V_shifted <= v``.

    Returns ``-inf`` when the sublevel set does not reach the boundary of P.
    A nonnegative value means the level set touches a flow-out facet.
    """
    if not v > 0:
        raise ValueError("level must be positive")
    rng = np.random.default_rng(seed)
    red = _Reduced(cert, model)
    best = -np.inf
    for lower, idx, sign in facet_lower_bounds(cert, model):
        if lower > v:
            continue
        base, basis, others, lo, hi = _face(model, idx, sign, half=False)
        cons = _slab_constraints(model, basis, base, others, lo, hi)
        seeds = _seeds(model, base, basis, n_starts, rng)
        # the sublevel slice of this face is nonempty iff min phi0 <= v
        val, x1_min, _ = _minimize_face(red.phi0, red.phi0_grad, base, basis, cons, seeds)
        if x1_min is None or val > v:
            continue
        theta = sign * np.pi - model.delta_star[idx]
        b = theta * model.incidence_e[idx]
        bgb = float(b @ red.g @ b)

        def gain(x1):
            slack = max(v - red.phi0(x1), 0.0)
            return b @ red.x2_star(x1) + np.sqrt(2 * slack * bgb)

        best = max(best, gain(x1_min))
        if basis.shape[1] == 0:
            continue
        level = [{"type": "ineq", "fun": lambda y: v - red.phi0(base + basis @ y)}]
        y_min = basis.T @ (x1_min - base)
        for y0 in [y_min] + seeds[: max(1, n_starts // 2)]:
            res = minimize(
                lambda y: -gain(base + basis @ y),
                y0,
                method="SLSQP",
                constraints=cons + level,
                options={"maxiter": 300, "ftol": 1e-10},
            )
            x1 = base + basis @ res.x
            feasible = red.phi0(x1) <= v + 1e-9 and all(np.min(c["fun"](res.x)) >= -1e-7 for c in cons)
            if feasible:
                best = max(best, gain(x1))
    return float(best)


def vmin_bisection(
    cert: Certificate,
    model: StateSpaceModel,
    lo: float,
    hi: float,
    rel_tol: float = 1e-3,
    seed: int = 0,
) -> float:
    """Smallest level whose sublevel set touches the flow-out boundary, by bisection on ``g``.

    Requires ``g(lo) < 0 <= g(hi)``.
    """
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    if g_of_v(cert, model, lo, seed=seed) >= 0:
        raise ValueError("lower level already reaches the flow-out boundary")
    if g_of_v(cert, model, hi, seed=seed) < 0:
        raise ValueError("upper level does not reach the flow-out boundary")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if g_of_v(cert, model, mid, seed=seed) >= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def in_invariant_set(cert: Certificate, model: StateSpaceModel, vmin: VminResult, x) -> bool:
    """Whether ``x`` lies in the certified region ``{V_shifted < vmin} within P``.

    For the convex estimator the level only bounds the facets of Q, so ``x``
    must also lie in Q.
    """
    x = np.asarray(x, dtype=float)
    if not in_polytope_p(model, x):
        return False
    if vmin.estimator == "convex" and not in_polytope_q(model, x):
        return False
    return bool(evaluate_v_shifted(cert, model, x) < vmin.value)


def _state_directions(model, count, rng):
    dirs = rng.normal(size=(count, model.dim))
    if model.network.infinite_bus is None:
        # uniform rotation is a symmetry of the dynamics; sample transverse to it
        angles = dirs[:, : model.n]
        dirs[:, : model.n] = angles - angles.mean(axis=1, keepdims=True)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def sample_invariant_set(
    cert: Certificate,
    model: StateSpaceModel,
    vmin: VminResult,
    count: int,
    seed: int = 0,
    r_cap: float = 50.0,
) -> np.ndarray:
    """Random states of the certified region.

    Each sample lies on a random ray from the equilibrium, at a radius drawn
    volume-uniformly up to the first exit of the region along that ray.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        (u,) = _state_directions(model, 1, rng)
        r_out = _first_exit(cert, model, vmin, u, r_cap)
        r = r_out * rng.uniform() ** (1.0 / model.dim)
        x = r * u
        if in_invariant_set(cert, model, vmin, x):
            out.append(x)
    return np.array(out)


def _first_exit(cert, model, vmin, u, r_cap, n_grid=200):
    radii = np.linspace(0, r_cap, n_grid + 1)[1:]
    xs = radii[:, None] * u
    inside = in_polytope_p(model, xs) & (evaluate_v_shifted(cert, model, xs) < vmin.value)
    if vmin.estimator == "convex":
        inside &= in_polytope_q(model, xs)
    if inside.all():
        return r_cap
    hi = radii[np.argmin(inside)]
    lo = hi - r_cap / n_grid
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if in_invariant_set(cert, model, vmin, mid * u):
            lo = mid
        else:
            hi = mid
    return lo

