"""Cramer transforms of the catalog laws, closed form against the numerical conjugate."""
import math

import numpy as np

from schrodinger_ot import (CramerTransform, Exponential1, Poisson1, Rademacher, StandardNormal,
                            cost_from_spec, cost_matrix, log_laplace)

# each law gets a grid strictly inside its effective domain
laws = {
    "normal": (StandardNormal(), np.linspace(-3, 3, 7)),
    "rademacher": (Rademacher(), np.linspace(-0.9, 0.9, 7)),
    "exponential1": (Exponential1(), np.linspace(0.25, 3, 7)),
    "poisson1": (Poisson1(), np.linspace(0.0, 3, 7)),
}

for name, (law, grid) in laws.items():
    closed = CramerTransform(law).evaluate(grid)
    numeric = CramerTransform(law, "numerical").evaluate(grid)
    print(f"{name:>13}  v    = {np.array2string(grid, precision=2)}")
    print(f"{'':>13}  c(v) = {np.array2string(closed, precision=4)}")
    print(f"{'':>13}  max |closed - numerical| = {np.abs(closed - numeric).max():.1e}")

# the Rademacher cost stays finite up to the edge of [-1, 1] and jumps to +inf past it
rad = CramerTransform(Rademacher())
print("rademacher at 1:", rad(1.0), "(log 2 =", math.log(2), ")")
print("rademacher at 2:", rad(2.0))

# the log-Laplace transform of an exponential variable blows up at zeta = 1
print("exponential log-Laplace at 0.5 and 1:", log_laplace(Exponential1(), 0.5), log_laplace(Exponential1(), 1.0))

# a cost spec turns a law into a cost matrix on point sets; +inf survives untouched
cf = cost_from_spec({"kind": "cramer", "law": "rademacher"})
print(cost_matrix(cf, [0.0, 1.0], [0.5, 1.0, 3.0]))

# twisting a normal law by the power map gives the cost |y - x|^p
twisted = cost_from_spec({"kind": "twisted", "law": "normal", "power_p": 1.5})
print("twisted p=1.5 cost from 0 to 4:", twisted([0.0], [4.0]), "vs 4^1.5 =", 4 ** 1.5)
