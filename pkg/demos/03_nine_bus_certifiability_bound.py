"""Can any member of the family certify the nine-bus post-fault state?

Certification needs V(x0) < Vmin.  Both sides are linear in the decision
variables except Vmin, which is a minimum over the flow-out boundary.  Fix
the level Vmin >= 1 and relax it to the finitely many boundary points seen so
far; minimizing V(x0) under that relaxation gives a lower bound on the best
ratio V(x0) / Vmin reachable in the family.  Adding the true boundary
minimizer of each new solution tightens the relaxation until it stalls.

A bound above one means no certificate in the family (at the given LMI
margin) can contain x0.
"""

import numpy as np

from gridlyap.lyapunov import Infeasible, assemble_lmi, evaluate_v_shifted, find_candidate, vbar_constraint
from gridlyap.model import builtin_case
from gridlyap.screening import builtin_contingency
from gridlyap.state_space import build_state_space
from gridlyap.vmin import vmin_exact

model = build_state_space(builtin_case("nine_bus"))
x0 = builtin_contingency(model, "paper_9bus").post_fault_state
problem = assemble_lmi(model)

objective = -vbar_constraint(problem, x0, 0.0).coeffs  # maximize -V(x0)
cert = find_candidate(problem)
level = vmin_exact(cert, model)
anchors = []
for it in range(20):
    anchors += [w for _, w in level.info["face_minima"]]
    cuts = [vbar_constraint(problem, w, 1.0, ">=") for w in anchors]
    result = find_candidate(problem, extra=cuts, objective=objective, min_margin=1e-4)
    if isinstance(result, Infeasible):
        print("relaxation infeasible:", result.status)
        break
    cert = result
    level = vmin_exact(cert, model)
    v0 = evaluate_v_shifted(cert, model, x0)
    # v0 is the relaxed optimum (a lower bound); v0 / level.value is what this member actually reaches
    print(f"{it:2d} cuts {len(anchors):3d}  bound {v0:.6f}  achieved ratio {v0 / level.value:.6f}")
    if abs(level.value - 1.0) < 1e-8:
        break

print(f"best ratio {v0 / level.value:.4f}: {'certifiable' if v0 / level.value < 1 else 'not certifiable'} in this family")
