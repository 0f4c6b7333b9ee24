"""Lyapunov function family: LMI assembly, candidate search and evaluation.

A family member is a triple ``(Q, K, H)`` with ``Q`` symmetric ``2n x 2n`` and
``K, H`` diagonal over the edges, such that

    L(Q, K, H) = [[A'Q + QA, R], [R', -2H]] <= 0,   R = QB - C'H - (KCA)'.

It induces

    V(x) = x'Qx/2 - sum_kj K_kj (cos delta_kj + delta_kj sin delta*_kj),

which decays wherever every edge satisfies ``|delta_kj + delta*_kj| < pi``.

The upper-left ``n x n`` block of ``A'Q + QA`` is identically zero (the angle
block of ``A`` vanishes), so ``L <= 0`` forces the whole first ``n`` rows of
``L`` to zero.  :func:`assemble_lmi` imposes those rows exactly by restricting
the decision vector to the null space of that linear map, and measures the
strictness margin ``t`` on the remaining velocity/nonlinearity block.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, replace

import cvxpy as cp
import numpy as np
import scipy.linalg

from .state_space import StateSpaceModel, actual_differences, nonlinearity_f, rhs

__all__ = [
    "Certificate",
    "Infeasible",
    "SolverFailure",
    "LinearConstraint",
    "LmiProblem",
    "assemble_lmi",
    "lmi_block",
    "find_candidate",
    "random_certificate",
    "energy_member",
    "evaluate_v",
    "evaluate_v_shifted",
    "evaluate_vdot",
    "gradient_v",
    "potential_gap",
    "vbar_constraint",
    "certificate_to_dict",
    "certificate_from_dict",
]

TIME_LIMIT_ENV = "GRIDLYAP_SOLVER_TIME_LIMIT"
LMI_TOL = 1e-8


class SolverFailure(RuntimeError):
    """The conic solver broke down (as opposed to proving infeasibility)."""


@dataclass(frozen=True, eq=False)
class Certificate:
    """One member of the Lyapunov family.

    ``lmi_margin`` is the slack ``t`` reached on the velocity/nonlinearity
    block; ``normalization`` the recorded ``trace(Q)``; ``v_at_equilibrium``
    the raw ``V(0)`` (subtracted by the shifted evaluation).
    """

    q_matrix: np.ndarray
    k_diag: np.ndarray
    h_diag: np.ndarray
    lmi_margin: float
    normalization: float
    v_at_equilibrium: float
    kind: str = "lmi"
    info: dict = field(default_factory=dict)

    def scaled(self, s: float) -> "Certificate":
        """Positive multiple of the certificate (still a family member)."""
        if not s > 0:
            raise ValueError("scale must be positive")
        return replace(
            self,
            q_matrix=s * self.q_matrix,
            k_diag=s * self.k_diag,
            h_diag=s * self.h_diag,
            lmi_margin=s * self.lmi_margin,
            normalization=s * self.normalization,
            v_at_equilibrium=s * self.v_at_equilibrium,
        )


@dataclass(frozen=True)
class Infeasible:
    """Returned by :func:`find_candidate` when no member satisfies the constraints."""

    status: str
    detail: str = ""

    def __bool__(self):
        return False


@dataclass(frozen=True)
class LinearConstraint:
    """``coeffs @ p  (<=|>=|==)  bound`` over the packed decision vector ``p``."""

    coeffs: np.ndarray
    bound: float
    sense: str = "<="

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "=="):
            raise ValueError(f"unknown sense {self.sense!r}")


def lmi_block(model: StateSpaceModel, q, k, h) -> np.ndarray:
    """The ``(2n+|E|)``-square block matrix of the family LMI, evaluated directly."""
    a, b, c = model.a_matrix, model.b_matrix, model.c_matrix
    q = np.asarray(q, dtype=float)
    kmat, hmat = np.diag(k), np.diag(h)
    r = q @ b - c.T @ hmat - (kmat @ c @ a).T
    top = np.hstack([a.T @ q + q @ a, r])
    bottom = np.hstack([r.T, -2.0 * hmat])
    return np.vstack([top, bottom])


class LmiProblem:
    """Affine map from the packed decision vector ``p = [triu(Q), K, H]`` to ``L``.

    Also carries the constraint data: ``Q >= mu I``, ``K >= kappa_min``,
    ``H >= 0`` and ``trace(Q) = normalization``.
    """

    def __init__(self, model: StateSpaceModel, mu: float, kappa_min: float, normalization: float):
        self.model = model
        self.mu = float(mu)
        self.kappa_min = float(kappa_min)
        self.normalization = float(normalization)
        dim, ne = model.dim, model.n_edges
        self.triu = np.triu_indices(dim)
        self.n_q = len(self.triu[0])
        self.n_vars = self.n_q + 2 * ne
        self.size = dim + ne
        basis = np.empty((self.n_vars, self.size, self.size))
        for i in range(self.n_vars):
            unit = np.zeros(self.n_vars)
            unit[i] = 1.0
            basis[i] = lmi_block(model, *self.unpack(unit))
        self.basis = basis
        n = model.n
        # rows of L that must vanish identically
        rows = basis[:, :n, :].reshape(self.n_vars, -1).T
        self.free_basis = scipy.linalg.null_space(rows, rcond=1e-12)
        self.reduced_index = np.arange(n, self.size)

    def unpack(self, p):
        p = np.asarray(p, dtype=float)
        dim = self.model.dim
        q = np.zeros((dim, dim))
        q[self.triu] = p[: self.n_q]
        q = q + q.T - np.diag(np.diag(q))
        ne = self.model.n_edges
        return q, p[self.n_q : self.n_q + ne].copy(), p[self.n_q + ne :].copy()

    def pack(self, q, k, h) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.concatenate([q[self.triu], np.asarray(k, float), np.asarray(h, float)])

    def block(self, p) -> np.ndarray:
        return np.tensordot(np.asarray(p, dtype=float), self.basis, axes=1)

    def linear_functional(self, fn) -> np.ndarray:
        """Coefficient vector of a function that is linear in ``(Q, K, H)``."""
        coeffs = np.empty(self.n_vars)
        for i in range(self.n_vars):
            unit = np.zeros(self.n_vars)
            unit[i] = 1.0
            coeffs[i] = fn(*self.unpack(unit))
        return coeffs


def assemble_lmi(
    model: StateSpaceModel,
    mu: float = 1e-6,
    kappa_min: float | None = None,
    normalization: float | None = None,
) -> LmiProblem:
    """Assemble the family LMI for ``model``.

    Defaults: ``kappa_min = 1e-4 * max_kj B_kj V_k V_j`` and ``trace(Q) = 2n``.
    """
    if kappa_min is None:
        kappa_min = 1e-4 * float(np.max(model.edge_weights))
    if normalization is None:
        normalization = float(model.dim)
    return LmiProblem(model, mu, kappa_min, normalization)


def _time_limit():
    value = os.environ.get(TIME_LIMIT_ENV)
    return float(value) if value else None


def find_candidate(
    problem: LmiProblem,
    extra=(),
    objective="margin",
    min_margin: float = 1e-6,
    solver: str = "CLARABEL",
) -> Certificate | Infeasible:
    """Search the family for a member satisfying ``extra`` linear constraints.

    ``objective="margin"`` maximizes the margin ``t``.  Any other objective is a
    coefficient vector over the packed decision vector to maximize, subject to
    ``t >= min_margin``.  Returns :class:`Infeasible` when the solver proves
    infeasibility or when a solution fails the post-solve residual check, and
    raises :class:`SolverFailure` on numerical breakdown.
    """
    model = problem.model
    basis = problem.free_basis
    r = basis.shape[1]
    if r == 0:
        return Infeasible("infeasible", "structural constraints leave no freedom")
    idx = problem.reduced_index
    m_red = len(idx)
    red = problem.basis[:, idx][:, :, idx]
    red = np.tensordot(basis.T, red, axes=1)
    lmat = red.reshape(r, -1, order="C").T
    dim = model.dim
    qb = np.stack([problem.unpack(basis[:, j])[0] for j in range(r)])
    qmat = qb.reshape(r, -1, order="C").T
    ne = model.n_edges
    k_rows = basis[problem.n_q : problem.n_q + ne]
    h_rows = basis[problem.n_q + ne :]

    z = cp.Variable(r)
    t = cp.Variable()
    lexpr = cp.reshape(lmat @ z, (m_red, m_red), order="C")
    qexpr = cp.reshape(qmat @ z, (dim, dim), order="C")
    cons = [
        (lexpr + lexpr.T) / 2 + t * np.eye(m_red) << 0,
        (qexpr + qexpr.T) / 2 - problem.mu * np.eye(dim) >> 0,
        k_rows @ z >= problem.kappa_min,
        h_rows @ z >= 0,
        cp.trace(qexpr) == problem.normalization,
    ]
    for con in extra:
        lhs = (np.asarray(con.coeffs, dtype=float) @ basis) @ z
        if con.sense == "<=":
            cons.append(lhs <= con.bound)
        elif con.sense == ">=":
            cons.append(lhs >= con.bound)
        else:
            cons.append(lhs == con.bound)
    if isinstance(objective, str):
        if objective != "margin":
            raise ValueError(f"unknown objective {objective!r}")
        # cap keeps the problem bounded when the margin is not otherwise limited
        cons.append(t <= 1e3)
        obj = cp.Maximize(t)
    else:
        cons.append(t >= min_margin)
        obj = cp.Maximize((np.asarray(objective, dtype=float) @ basis) @ z)
    prob = cp.Problem(obj, cons)
    opts = {}
    limit = _time_limit()
    if limit and solver == "CLARABEL":
        opts["time_limit"] = limit
    try:
        with warnings.catch_warnings():
            # inaccurate solves are screened by the post-solve residual check below
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=solver, **opts)
    except cp.error.SolverError as exc:
        raise SolverFailure(str(exc)) from exc
    status = prob.status
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return Infeasible(status)
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or z.value is None:
        raise SolverFailure(f"solver status {status}")
    margin = float(t.value)
    if margin < min_margin * (1 - 1e-3):
        return Infeasible("infeasible", f"best margin {margin:.3e} below {min_margin:.1e}")
    p = basis @ z.value
    q, k, h = problem.unpack(p)
    q = 0.5 * (q + q.T)
    # clip solver-tolerance violations of the sign constraints
    k = np.maximum(k, problem.kappa_min)
    h = np.maximum(h, 0.0)
    cert = _make_certificate(model, q, k, h, kind="lmi", solver_status=status)
    # an inaccurate solve must still pass the residual checks to count as a certificate
    if cert.info["lmi_max_eig"] > LMI_TOL or cert.info["q_min_eig"] < problem.mu * (1 - 1e-3) - LMI_TOL:
        return Infeasible("inaccurate", f"post-solve check failed (max eig {cert.info['lmi_max_eig']:.2e})")
    return replace(cert, lmi_margin=_reduced_margin(model, cert))


def random_certificate(problem: LmiProblem, seed: int = 0, margin_fraction: float = 0.2) -> Certificate | Infeasible:
    """A family member pushed in a random direction.

    Maximizes a random linear objective while keeping the margin at least
    ``margin_fraction`` of the best achievable one.
    """
    best = find_candidate(problem)
    if isinstance(best, Infeasible):
        return best
    direction = np.random.default_rng(seed).normal(size=problem.n_vars)
    return find_candidate(problem, objective=direction, min_margin=margin_fraction * best.lmi_margin)


def _reduced_margin(model, cert) -> float:
    block = lmi_block(model, cert.q_matrix, cert.k_diag, cert.h_diag)
    n = model.n
    return float(-np.linalg.eigvalsh(block[n:, n:]).max())


def _make_certificate(model, q, k, h, kind, **info) -> Certificate:
    v0 = -float(np.sum(k * (np.cos(model.delta_star) + model.delta_star * np.sin(model.delta_star))))
    block = lmi_block(model, q, k, h)
    info = dict(info)
    info["lmi_max_eig"] = float(np.linalg.eigvalsh(block).max())
    info["q_min_eig"] = float(np.linalg.eigvalsh(q).min())
    return Certificate(
        q_matrix=q,
        k_diag=np.asarray(k, float),
        h_diag=np.asarray(h, float),
        lmi_margin=0.0,
        normalization=float(np.trace(q)),
        v_at_equilibrium=v0,
        kind=kind,
        info=info,
    )


def energy_member(model: StateSpaceModel) -> Certificate:
    """The classical energy function as a family member: ``Q = diag(0, M)``, ``K = BVV``, ``H = 0``."""
    n = model.n
    q = np.zeros((model.dim, model.dim))
    q[n:, n:] = model.diag_m
    cert = _make_certificate(model, q, model.edge_weights.copy(), np.zeros(model.n_edges), kind="energy")
    return cert


def potential_gap(model: StateSpaceModel, x) -> np.ndarray:
    """Per-edge ``I_kj(x) = (cos d* + d* sin d*) - (cos d + d sin d*)``.

    Nonnegative on the closure of P; zero at the equilibrium.
    """
    ds = model.delta_star
    delta = actual_differences(model, x)
    return (np.cos(ds) + ds * np.sin(ds)) - (np.cos(delta) + delta * np.sin(ds))


def _quadratic(q, x):
    x = np.asarray(x, dtype=float)
    return 0.5 * np.einsum("...i,ij,...j->...", x, q, x)


def evaluate_v(cert: Certificate, model: StateSpaceModel, x):
    """Raw ``V(x)``; accepts a single state or a stack of states."""
    ds = model.delta_star
    delta = actual_differences(model, x)
    return _quadratic(cert.q_matrix, x) - (np.cos(delta) + delta * np.sin(ds)) @ cert.k_diag


def evaluate_v_shifted(cert: Certificate, model: StateSpaceModel, x):
    """``V(x) - V(0)``: zero at the equilibrium and nonnegative in P."""
    return _quadratic(cert.q_matrix, x) + potential_gap(model, x) @ cert.k_diag


def gradient_v(cert: Certificate, model: StateSpaceModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = x @ cert.q_matrix
    grad[..., : model.n] += (nonlinearity_f(model, x) * cert.k_diag) @ model.incidence_e
    return grad


def evaluate_vdot(cert: Certificate, model: StateSpaceModel, x):
    """Time derivative of ``V`` along the swing dynamics (chain rule)."""
    return np.sum(gradient_v(cert, model, x) * rhs(model, x), axis=-1)


def vbar_constraint(problem: LmiProblem, x0, bound: float, sense: str = "<=") -> LinearConstraint:
    """Linear constraint ``V_shifted(x0) <= bound`` over the family's decision vector."""
    model = problem.model
    x0 = np.asarray(x0, dtype=float)
    gap = potential_gap(model, x0)

    def value(q, k, h):
        return 0.5 * x0 @ q @ x0 + gap @ k

    return LinearConstraint(problem.linear_functional(value), float(bound), sense)


def certificate_to_dict(cert: Certificate) -> dict:
    return {
        "kind": cert.kind,
        "q": cert.q_matrix.tolist(),
        "k": cert.k_diag.tolist(),
        "h": cert.h_diag.tolist(),
        "margin": cert.lmi_margin,
        "normalization": cert.normalization,
        "v_at_equilibrium": cert.v_at_equilibrium,
        "lmi_max_eig": cert.info.get("lmi_max_eig"),
    }


def certificate_from_dict(doc: dict, model: StateSpaceModel | None = None) -> Certificate:
    try:
        q = np.array(doc["q"], dtype=float)
        k = np.array(doc["k"], dtype=float)
        h = np.array(doc["h"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed certificate document: {exc}") from exc
    if q.ndim != 2 or q.shape[0] != q.shape[1] or k.shape != h.shape:
        raise ValueError("certificate matrices have inconsistent shapes")
    if model is not None:
        if q.shape[0] != model.dim or k.shape != (model.n_edges,):
            raise ValueError("certificate does not match the model dimensions")
        cert = _make_certificate(model, q, k, h, kind=doc.get("kind", "lmi"))
        return replace(cert, lmi_margin=float(doc.get("margin", 0.0)))
    return Certificate(
        q_matrix=q,
        k_diag=k,
        h_diag=h,
        lmi_margin=float(doc.get("margin", 0.0)),
        normalization=float(doc.get("normalization", np.trace(q))),
        v_at_equilibrium=float(doc.get("v_at_equilibrium", 0.0)),
        kind=doc.get("kind", "lmi"),
    )
