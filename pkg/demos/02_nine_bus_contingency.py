"""The three-machine system and its benchmark post-fault state.

Reports the operating point, the energy-method numbers, the critical levels
of the margin certificate, the adaptation outcome, and what the simulator
says actually happens.
"""

import numpy as np

from gridlyap.energy import closest_uep_energy, energy_value, find_ueps
from gridlyap.lyapunov import assemble_lmi, evaluate_v_shifted, find_candidate
from gridlyap.model import builtin_case
from gridlyap.screening import adapt, builtin_contingency
from gridlyap.simulator import converged_to, integrate
from gridlyap.state_space import build_state_space, in_polytope_p, in_polytope_q
from gridlyap.vmin import vmin_approx, vmin_convex, vmin_exact

model = build_state_space(builtin_case("nine_bus"))
net, eq = model.network, model.equilibrium
print("edge angles at the operating point:", {e: round(float(d), 4) for e, d in zip(net.edges, eq.edge_deltas)})

contingency = builtin_contingency(model, "paper_9bus")
x0 = contingency.post_fault_state
print(f"post-fault state in P: {bool(in_polytope_p(model, x0))}, in Q: {bool(in_polytope_q(model, x0))}")

ueps = find_ueps(net, eq)
print(f"{len(ueps)} unstable equilibria; closest-UEP energy {closest_uep_energy(net, eq, ueps):.4f}")
print(f"energy at the post-fault state {energy_value(net, eq, x0):.4f}")

cert = find_candidate(assemble_lmi(model))
levels = {fn.__name__: fn(cert, model).value for fn in (vmin_exact, vmin_convex, vmin_approx)}
print("critical levels:", {k: round(v, 4) for k, v in levels.items()})
print(f"V at the post-fault state {evaluate_v_shifted(cert, model, x0):.4f}")

verdict = adapt(model, contingency)
print(f"adapt: {verdict.outcome} after {verdict.iterations} iterations ({verdict.reason})")
for step in verdict.history:
    print(f"   eps {step.eps:.4f}  V(x0) {step.v_at_x0:.4f}  Vmin {step.vmin:.4f}  ratio {step.v_at_x0 / step.vmin:.4f}")

traj = integrate(model, x0)
print(f"simulation: {traj.status} at t = {traj.times[-1]:.1f}, back at the operating point: {converged_to(traj, eq, model)}")
