"""Contingency screening against a certified region, and certificate adaptation.

Screening compares ``V_shifted(x0)`` with the critical level of a fixed
certificate.  Adaptation repeatedly re-solves the family LMI with the extra
linear constraint ``V_shifted_new(x0) <= Vmin_old - eps`` so that the next
certificate's level at ``x0`` sits strictly below the previous critical level,
halving ``eps`` whenever that is infeasible.  A verdict is only ever
``certified`` or ``undecided``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .lyapunov import (
    Certificate,
    Infeasible,
    assemble_lmi,
    evaluate_v_shifted,
    find_candidate,
    vbar_constraint,
)
from .state_space import StateSpaceModel
from .vmin import ESTIMATORS, VminResult, in_invariant_set, vmin_approx, vmin_convex, vmin_exact

__all__ = [
    "Contingency",
    "ScreeningVerdict",
    "AdaptStep",
    "screen",
    "adapt",
    "batch_screen",
    "compute_vmin",
    "builtin_contingency",
    "parse_contingencies",
]


@dataclass(frozen=True, eq=False)
class Contingency:
    """Post-fault state as deviations from the equilibrium."""

    post_fault_state: np.ndarray
    label: str = ""

    @classmethod
    def from_angles(cls, model: StateSpaceModel, delta, omega, label: str = "") -> "Contingency":
        """Build from absolute generator angles and velocities (state generators only)."""
        delta = np.asarray(delta, dtype=float)
        omega = np.asarray(omega, dtype=float)
        if delta.shape != (model.n,) or omega.shape != (model.n,):
            raise ValueError(f"expected {model.n} angles and {model.n} velocities")
        return cls(np.concatenate([delta - model.equilibrium.angles, omega]), label)

    @classmethod
    def from_dict(cls, model: StateSpaceModel, doc: dict) -> "Contingency":
        if not isinstance(doc, dict) or "delta" not in doc or "omega" not in doc:
            raise ValueError("contingency needs 'delta' and 'omega' lists")
        return cls.from_angles(model, doc["delta"], doc["omega"], str(doc.get("label", "")))

    def absolute_angles(self, model: StateSpaceModel) -> np.ndarray:
        return model.equilibrium.angles + self.post_fault_state[: model.n]


def builtin_contingency(model: StateSpaceModel, name: str) -> Contingency:
    """Named contingencies; ``paper_9bus`` is (delta_12, delta_13) = (2.513, 0.7854) at rest."""
    if name == "paper_9bus":
        if model.network.name != "nine_bus":
            raise ValueError("paper_9bus applies to the nine_bus case")
        delta = np.array([0.7854, 0.7854 - 2.513, 0.0])
        return Contingency.from_angles(model, delta, np.zeros(3), "paper_9bus")
    raise ValueError(f"unknown contingency {name!r}")


def parse_contingencies(model: StateSpaceModel, text: str) -> list[Contingency]:
    doc = json.loads(text)
    if isinstance(doc, dict):
        doc = [doc]
    return [Contingency.from_dict(model, item) for item in doc]


@dataclass(frozen=True)
class AdaptStep:
    """One accepted adaptation step: the level at ``x0`` and the new critical level."""

    eps: float
    v_at_x0: float
    vmin: float
    bound: float


@dataclass(frozen=True, eq=False)
class ScreeningVerdict:
    outcome: str
    v_at_x0: float
    vmin_used: VminResult | None
    certificate: Certificate | None
    label: str = ""
    iterations: int = 0
    history: tuple = ()
    reason: str = ""
    error: str | None = None
    info: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.outcome == "certified"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "outcome": self.outcome,
            "v_at_x0": self.v_at_x0,
            "vmin": None if self.vmin_used is None else self.vmin_used.value,
            "estimator": None if self.vmin_used is None else self.vmin_used.estimator,
            "iterations": self.iterations,
            "reason": self.reason,
            "error": self.error,
        }


def compute_vmin(cert: Certificate, model: StateSpaceModel, estimator: str = "exact", seed: int = 0) -> VminResult:
    if estimator == "exact":
        return vmin_exact(cert, model, seed=seed)
    if estimator == "convex":
        return vmin_convex(cert, model, seed=seed)
    if estimator == "approx":
        return vmin_approx(cert, model)
    raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


def _check_state(model, contingency):
    x0 = np.asarray(contingency.post_fault_state, dtype=float)
    if x0.shape != (model.dim,):
        raise ValueError(f"contingency state has {x0.size} entries, model needs {model.dim}")
    return x0


def screen(cert: Certificate, model: StateSpaceModel, vmin: VminResult, contingency: Contingency) -> ScreeningVerdict:
    """Certified iff the post-fault state lies in the certified region."""
    x0 = _check_state(model, contingency)
    v0 = float(evaluate_v_shifted(cert, model, x0))
    if vmin.status != "converged":
        reason = "critical level not converged"
        outcome = "undecided"
    elif in_invariant_set(cert, model, vmin, x0):
        reason, outcome = "", "certified"
    else:
        reason, outcome = "outside certified region", "undecided"
    return ScreeningVerdict(outcome, v0, vmin, cert, contingency.label, reason=reason)


def adapt(
    model: StateSpaceModel,
    contingency: Contingency,
    eps0: float | None = None,
    eps_min: float | None = None,
    max_iter: int = 50,
    estimator: str = "exact",
    start: Certificate | None = None,
    seed: int = 0,
    anchor_boundary: bool = False,
) -> ScreeningVerdict:
    """Search the family for a certificate whose region contains the contingency.

    ``eps0`` and ``eps_min`` default to ``0.5`` and ``1e-4`` times the first
    critical level.  ``history`` records every accepted step.

    With ``anchor_boundary`` each re-solve also requires the new function to
    stay at or above the current critical level at every flow-out face
    minimizer found so far.  Without it the trace normalization alone does not
    stop the solver from shrinking ``K`` and the critical level together, so
    the fixed step ``eps`` buys no progress in the ratio that decides
    certification.
    """
    x0 = _check_state(model, contingency)
    problem = assemble_lmi(model)
    cert = start if start is not None else find_candidate(problem)
    if isinstance(cert, Infeasible):
        return ScreeningVerdict(
            "undecided", float("nan"), None, None, contingency.label, reason=f"no initial certificate: {cert.status}"
        )
    vmin = compute_vmin(cert, model, estimator, seed)
    first = vmin.value
    eps = 0.5 * first if eps0 is None else float(eps0)
    floor = 1e-4 * first if eps_min is None else float(eps_min)
    if not eps > floor > 0:
        raise ValueError("need eps0 > eps_min > 0")
    v0 = float(evaluate_v_shifted(cert, model, x0))
    history = [AdaptStep(0.0, v0, vmin.value, float("nan"))]
    anchors = []
    iterations = 1
    while True:
        verdict = screen(cert, model, vmin, contingency)
        if verdict.certified:
            return _final(verdict, iterations, history, "")
        if iterations >= max_iter:
            return _final(verdict, iterations, history, "iteration limit reached")
        if anchor_boundary:
            anchors.extend(w for _, w in vmin.info.get("face_minima", ()))
        candidate = None
        while eps >= floor:
            bound = vmin.value - eps
            if bound > 0:
                extra = [vbar_constraint(problem, x0, bound)]
                extra += [vbar_constraint(problem, w, vmin.value, ">=") for w in anchors]
                result = find_candidate(problem, extra=extra)
                if not isinstance(result, Infeasible):
                    candidate = result
                    break
            eps *= 0.5
        if candidate is None:
            return _final(verdict, iterations, history, "step size exhausted")
        cert = candidate
        vmin = compute_vmin(cert, model, estimator, seed)
        v0 = float(evaluate_v_shifted(cert, model, x0))
        history.append(AdaptStep(eps, v0, vmin.value, bound))
        iterations += 1


def _final(verdict: ScreeningVerdict, iterations, history, reason) -> ScreeningVerdict:
    return ScreeningVerdict(
        verdict.outcome,
        verdict.v_at_x0,
        verdict.vmin_used,
        verdict.certificate,
        verdict.label,
        iterations=iterations,
        history=tuple(history),
        reason=reason or verdict.reason,
    )


def batch_screen(
    model: StateSpaceModel,
    contingencies,
    cert: Certificate | None = None,
    vmin: VminResult | None = None,
    policy: str = "screen",
    **adapt_kwargs,
) -> list[ScreeningVerdict]:
    """Screen (or adapt for) each contingency in order; item errors do not stop the batch."""
    if not contingencies:
        raise ValueError("empty contingency list")
    if policy == "screen" and (cert is None or vmin is None):
        raise ValueError("screen policy needs a certificate and its critical level")
    out = []
    for item in contingencies:
        try:
            if policy == "screen":
                out.append(screen(cert, model, vmin, item))
            elif policy == "adapt":
                out.append(adapt(model, item, **adapt_kwargs))
            else:
                raise ValueError(f"unknown policy {policy!r}")
        except (ValueError, RuntimeError) as exc:
            out.append(
                ScreeningVerdict("undecided", float("nan"), None, None, getattr(item, "label", ""), error=str(exc))
            )
    return out
