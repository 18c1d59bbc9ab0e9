"""The fixed-point landscape: one attractor, unstable saddles elsewhere.

A closed-form 3x3 problem where a bad start parks the iteration on a
spurious fixed point. Enumerating every invariant projector classifies
the landscape; the descent functional decreases along trajectories and
has strictly negative curvature along each saddle's escape direction.
"""

import numpy as np

import ace_lab as al

prob = al.counterexample("3x3")
print("A+B eigenvalues:", prob.eigenvalues, " true subspace: first axis")

# Bad start: third coordinate axis. The iteration moves to the second
# axis and stays there, even though it is not the solution.
trace = al.run(prob, init=al.Frame.coordinate(3, [2]))
axes = [int(np.argmax(np.abs(s.frame.columns))) + 1 for s in trace.steps]
print(f"trajectory through coordinate axes: {' -> '.join(f'e{a}' for a in axes)}"
      f"   ({trace.terminal_status})")

print("\ninvariant projectors and their classification:")
for rep in al.enumerate_invariant_projectors(prob):
    extra = "" if rep.max_jacobian_eigenvalue is None else \
        f"  max Jacobian eigenvalue {rep.max_jacobian_eigenvalue:.4f}"
    print(f"  tau={rep.tau}: {rep.stability:9s} "
          f"(top selected {rep.lambda_tau_n:+.2f} vs complement bottom {rep.mu_tau:+.2f}){extra}")

print("\ndescent functional (sum of occupied Ritz values):")
for i in range(3):
    print(f"  F(e{i+1}) = {al.functional_F(prob, al.Frame.coordinate(3, [i])):+.1f}")

# At the spurious fixed point e2 the functional has a strict saddle:
# negative curvature along the expanding Jacobian eigendirection.
saddle = al.Frame.coordinate(3, [1])
jb = al.jacobian_blocks(prob, saddle)
sigma, direction = al.chart_direction(jb, 0, 0)
sc = al.saddle_curvature(prob, saddle, direction)
print(f"\nat the spurious point e2: Jacobian eigenvalue {sigma:.4f} (> 1),")
print(f"curvature along that direction: closed form {sc['second_deriv']:+.4f}, "
      f"finite differences {sc['second_deriv_fd']:+.4f}")

# A generic random start escapes the saddles and finds the solution.
for seed in range(3):
    init = al.Frame.haar(3, 1, np.random.default_rng(seed))
    tr = al.run(prob, init=init)
    print(f"random start {seed}: {tr.terminal_status} in {tr.iters} steps")
