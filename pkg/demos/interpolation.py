"""Bridge-mixture marginal flows converging to the displacement interpolation.

At positive temperature the time-1/2 marginal is a Gaussian mixture centred on the
midpoints of the entropic plan. As k grows the bumps narrow and the mixture settles
on the atoms at 1 and 2 that the optimal plan passes through.
"""
import numpy as np

from schrodinger_ot import (DiscreteMeasure, anneal, cost_from_spec, cost_matrix,
                            displacement_interpolation, lp_solve, mixture_flow, wasserstein1_1d)

mu0 = DiscreteMeasure.uniform([0.0, 1.0])
mu1 = DiscreteMeasure.uniform([2.0, 3.0])
cost = cost_from_spec({"kind": "power", "p": 2.0, "scale": 0.5})

plan = lp_solve(mu0, mu1, cost_matrix(cost, mu0.points, mu1.points)).plan
midway = displacement_interpolation(plan, 0.5)
print("displacement interpolation at t = 1/2:", midway.points[:, 0], midway.weights)

report = anneal(mu0, mu1, cost, schedule=(4, 16, 64, 256))
for row in report.rows:
    k = int(row.k)
    flow = mixture_flow(row.report.coupling, k, 0.5)
    x, w = flow.points[:, 0], flow.weights
    spread = np.sqrt(w @ (x - w @ x) ** 2)
    print(f"k = {k:4d}  W1 to interpolation {wasserstein1_1d(flow, midway):.4f}"
          f"  (bound {2 * np.sqrt(1 / (4 * k)):.4f})  std {spread:.4f}")

# a rough text picture of the k = 16 flow
flow = mixture_flow(report.rows[1].report.coupling, 16, 0.5, eval_grid=np.linspace(0, 3, 31))
for x, w in zip(flow.points[:, 0], flow.weights):
    print(f"{x:4.1f} {'#' * int(round(200 * w))}")
