"""Zero-noise limits of entropic (Schrodinger) transport problems.

Costs come from Cramer transforms of random-walk increments, entropic problems
are solved by log-domain iterative proportional fitting along an increasing
schedule of k, and an exact transportation simplex certifies the limits.
"""
from .cost_engine import (CostFunction, CramerTransform, Exponential1, FiniteSupport, Poisson1,
                          Rademacher, SourceLaw, StandardNormal, Twist, affine_transport,
                          cost_from_spec, cost_matrix, cramer, identity_twist, log_laplace,
                          power_twist, ramp_twist, twisted_cost)
from .entropic import (AnnealReport, GibbsKernel, InfeasibleError, Potentials, SolveReport,
                       anneal, build_kernel, entropic_value, moving_constraint,
                       renormalized_value, sinkhorn)
from .measures import (Coupling, DiscreteMeasure, entropy_chain_rule_residual, marginal,
                       relative_entropy, tv_distance, wasserstein1_1d)
from .oracle import OracleResult, lp_solve, monotone_1d, tc_value
from .paths import (ActionFunctional, GeodesicResult, PiecewiseLinearPath, action,
                    brownian_bridge_marginal, displacement_interpolation, geodesic, kinetic,
                    mixture_flow, mogulskii, static_cost, twisted_walk)

__version__ = "0.1.0"

__all__ = [
    "action", "ActionFunctional", "affine_transport", "anneal", "AnnealReport",
    "brownian_bridge_marginal", "build_kernel", "cost_from_spec", "cost_matrix", "CostFunction",
    "Coupling", "cramer", "CramerTransform", "DiscreteMeasure", "displacement_interpolation",
    "entropic_value", "entropy_chain_rule_residual", "Exponential1", "FiniteSupport",
    "geodesic", "GeodesicResult", "GibbsKernel", "identity_twist", "InfeasibleError", "kinetic",
    "log_laplace", "lp_solve", "marginal", "mixture_flow", "mogulskii", "monotone_1d",
    "moving_constraint", "OracleResult", "PiecewiseLinearPath", "Poisson1", "Potentials",
    "power_twist", "Rademacher", "ramp_twist", "relative_entropy", "renormalized_value",
    "sinkhorn", "SolveReport", "SourceLaw", "StandardNormal", "static_cost", "tc_value",
    "tv_distance", "Twist", "twisted_cost", "twisted_walk", "wasserstein1_1d",
]
