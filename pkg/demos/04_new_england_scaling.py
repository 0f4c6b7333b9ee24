"""Ten machines: LMI size, solve time, and a soundness spot check."""

import time

import numpy as np

from gridlyap.lyapunov import assemble_lmi, find_candidate
from gridlyap.model import builtin_case
from gridlyap.simulator import converged_to, integrate
from gridlyap.state_space import build_state_space
from gridlyap.vmin import sample_invariant_set, vmin_approx, vmin_convex, vmin_exact

model = build_state_space(builtin_case("new_england_39"))
print(f"{model.n} machines, {model.n_edges} reduced-network edges")
print(f"largest operating edge angle {np.abs(model.equilibrium.edge_deltas).max():.3f} rad")

start = time.perf_counter()
problem = assemble_lmi(model)
cert = find_candidate(problem)
print(f"LMI block {problem.size}x{problem.size}, margin {cert.lmi_margin:.3f}, {time.perf_counter() - start:.2f} s")

for fn in (vmin_approx, vmin_convex, vmin_exact):
    start = time.perf_counter()
    r = fn(cert, model)
    print(f"  {r.estimator:>6}: {r.value:8.3f}  ({time.perf_counter() - start:.1f} s)")

level = vmin_exact(cert, model)
xs = sample_invariant_set(cert, model, level, 25, seed=0)
ok = sum(converged_to(integrate(model, x), model.equilibrium, model) for x in xs)
print(f"{ok} of {len(xs)} sampled certified states converge")
