"""Random-walk kernels only reach a lattice, so a diffuse target must be moved onto it.

A Rademacher walk of k steps started at 0 ends at multiples of 2/k. With k = 8 the
reachable targets on a fine grid over [-1, 1] are spaced 0.25 apart, and a target
measure spread over other grid points is infeasible as it stands.
"""
import numpy as np

from schrodinger_ot import (DiscreteMeasure, InfeasibleError, build_kernel, cost_from_spec, cost_matrix,
                            moving_constraint, sinkhorn, wasserstein1_1d)
from schrodinger_ot.entropic import on_support

steps = 8
grid = np.linspace(-1, 1, 41)
mu0 = DiscreteMeasure.dirac([0.0])
ref = DiscreteMeasure.uniform(grid)
cost = cost_from_spec({"kind": "walk", "law": "rademacher", "steps": steps})
kernel = build_kernel(mu0, ref, cost_matrix(cost, mu0.points, ref.points), steps)
print("reachable targets:", grid[kernel.reachable()])

mu1 = DiscreteMeasure.uniform(np.linspace(-0.9, 0.9, 7))
try:
    sinkhorn(kernel, on_support(mu1, grid))
except InfeasibleError as exc:
    print("without moving the target:", exc)

moved = moving_constraint(mu1, kernel)
kept = moved.weights > 0
for x, w in zip(moved.points[kept, 0], moved.weights[kept]):
    print(f"  moved target atom {x:+.2f} weight {w:.4f}")
print("W1 to the original target:", wasserstein1_1d(moved.positive_part(), mu1), "<= mesh", 2 / steps)

report = sinkhorn(kernel, moved)
print("solve converged:", report.converged, "in", report.iterations, "iterations")
