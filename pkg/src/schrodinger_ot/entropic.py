"""Static Schrodinger problems solved by log-domain iterative proportional fitting."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .measures import Coupling, DiscreteMeasure, point_key, relative_entropy, tv_distance

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 50000


class InfeasibleError(ValueError):
    """No coupling with finite entropy satisfies the marginal constraints."""


@dataclass(frozen=True, eq=False)
class GibbsKernel:
    """Row-normalized log reference kernel.

    ``log_rho[i, j] = -k c(x_i, y_j) + log r(y_j) - log Z_k(x_i)``; each row is a
    probability on the target support and entries are -inf exactly where c = +inf.
    """

    k: float
    source: DiscreteMeasure
    reference: DiscreteMeasure
    cost: np.ndarray
    log_rho: np.ndarray
    log_z: np.ndarray

    @property
    def source_support(self) -> np.ndarray:
        return self.source.points

    @property
    def target_support(self) -> np.ndarray:
        return self.reference.points

    def joint_log(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.source.weights)[:, None] + self.log_rho

    def joint(self) -> Coupling:
        return Coupling(self.source.points, self.reference.points, np.exp(self.joint_log()))

    def reachable(self) -> np.ndarray:
        """Target atoms receiving kernel mass from the positive part of the source."""
        return np.any(np.isfinite(self.log_rho[self.source.weights > 0]), axis=0)


def build_kernel(mu0: DiscreteMeasure, r: DiscreteMeasure, cmat, k: float) -> GibbsKernel:
    cmat = np.asarray(cmat, dtype=float)
    if cmat.shape != (len(mu0), len(r)):
        raise ValueError(f"cost matrix shape {cmat.shape} does not match ({len(mu0)}, {len(r)})")
    if k <= 0:
        raise ValueError("k must be positive")
    if np.any(np.isnan(cmat)) or np.any(cmat == -np.inf):
        raise ValueError("cost entries must lie in [0, +inf]")
    with np.errstate(divide="ignore", invalid="ignore"):
        unnorm = -k * cmat + np.log(r.weights)[None, :]
    unnorm[np.isinf(cmat)] = -np.inf
    log_z = logsumexp(unnorm, axis=1)
    bad = np.flatnonzero(~np.isfinite(log_z))
    if bad.size:
        raise InfeasibleError(f"source point {mu0.points[bad[0]].tolist()} has no finite-cost "
                              "target with positive reference weight")
    return GibbsKernel(float(k), mu0, r, cmat, unnorm - log_z[:, None], log_z)


@dataclass(frozen=True)
class Potentials:
    u: np.ndarray
    v: np.ndarray

    def scaled(self, factor: float) -> "Potentials":
        return Potentials(self.u * factor, self.v * factor)


@dataclass(frozen=True, eq=False)
class SolveReport:
    coupling: Coupling
    potentials: Potentials
    iterations: int
    marginal_error: float
    value: float
    converged: bool
    k: float
    transport_value: float = np.nan
    transport_cost: float = np.nan

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "value": self.value,
            "transport_value": self.transport_value,
            "transport_cost": self.transport_cost,
            "iterations": self.iterations,
            "marginal_error": self.marginal_error,
            "converged": self.converged,
            "coupling": self.coupling.to_dict(),
            "potentials": {"u": self.potentials.u.tolist(), "v": self.potentials.v.tolist()},
        }


def entropic_value(coupling: Coupling, kernel: GibbsKernel) -> float:
    """(1/k) H(pi | mu0 x rho^k); +inf off absolute continuity.

    Evaluated against the log kernel so that entries below the float range of
    exp(-k c) do not break absolute continuity.
    """
    w = coupling.weights
    if w.shape != kernel.log_rho.shape:
        raise ValueError("coupling and kernel shapes differ")
    charged = w > 0
    logq = kernel.joint_log()[charged]
    if np.any(np.isinf(logq)):
        return np.inf
    pw = w[charged]
    return float(np.sum(pw * (np.log(pw) - logq))) / kernel.k


def renormalized_value(coupling: Coupling, kernel: GibbsKernel) -> float:
    """sum pi c + (1/k) H(pi | mu0 x r).

    Equals ``entropic_value`` minus the additive constant (1/k) sum mu0 log Z_k and is
    the quantity compared with the optimal transport cost.
    """
    w = coupling.weights
    charged = w > 0
    if np.any(np.isinf(kernel.cost[charged])):
        return np.inf
    ref = np.outer(kernel.source.weights, kernel.reference.weights)
    return float(np.sum(w[charged] * kernel.cost[charged])) + relative_entropy(w, ref) / kernel.k


def _check_feasible(kernel: GibbsKernel, target: DiscreteMeasure) -> None:
    if len(target) != kernel.log_rho.shape[1]:
        raise ValueError("target measure must live on the kernel target support")
    if not np.array_equal(target.points, kernel.target_support):
        raise ValueError("target measure points differ from the kernel target support")
    unreachable = (target.weights > 0) & ~kernel.reachable()
    if np.any(unreachable):
        j = int(np.flatnonzero(unreachable)[0])
        raise InfeasibleError(f"target atom {kernel.target_support[j].tolist()} is unreachable "
                              "from the source support")


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    # lean max-shifted log-sum-exp; rows of all -inf give -inf
    top = np.max(x, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - top), axis=axis, keepdims=True)) + top
    return np.squeeze(out, axis=axis)


def _errors(logpi: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    pi = np.exp(logpi)
    return max(np.abs(pi.sum(axis=1) - a).sum(), np.abs(pi.sum(axis=0) - b).sum())


def sinkhorn(kernel: GibbsKernel, target: DiscreteMeasure, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER, warm: Potentials | None = None) -> SolveReport:
    """Alternate log-domain scalings of the kernel joint until both marginals match.

    The returned coupling is exp(u_i + log mu0_i + log rho_ij + v_j). Structural
    infeasibility raises InfeasibleError before iterating; hitting ``max_iter``
    returns a report with ``converged=False``.
    """
    _check_feasible(kernel, target)
    a, b = kernel.source.weights, target.weights
    with np.errstate(divide="ignore"):
        log_b = np.log(b)
    base = kernel.joint_log()
    n, m = base.shape
    u = np.zeros(n) if warm is None else np.array(warm.u, dtype=float)
    v = np.zeros(m) if warm is None else np.array(warm.v, dtype=float)
    if u.shape != (n,) or v.shape != (m,):
        raise ValueError("warm-start potentials have the wrong shape")
    u[a == 0] = 0.0
    v[b == 0] = -np.inf
    v[~np.isfinite(v) & (b > 0)] = 0.0

    logpi = u[:, None] + base + v[None, :]
    err = _errors(logpi, a, b)
    it = 0
    row_ok = a > 0
    col_ok = b > 0
    rho_rows = kernel.log_rho[row_ok]
    base_active = base[row_ok][:, col_ok]
    while err > tol and it < max_iter:
        it += 1
        u[row_ok] = -_lse(rho_rows + v[None, :], axis=1)
        v[col_ok] = log_b[col_ok] - _lse(u[row_ok, None] + base_active, axis=0)
        logpi = u[:, None] + base + v[None, :]
        pi = np.exp(logpi)
        err = max(np.abs(pi.sum(axis=1) - a).sum(), np.abs(pi.sum(axis=0) - b).sum())
    converged = err <= tol
    if not converged:
        logger.warning("IPFP did not reach tol %.3g after %d iterations (error %.3g)", tol, it, err)
    pi = np.exp(logpi)
    pi = pi / pi.sum()
    coupling = Coupling(kernel.source_support, kernel.target_support, pi)
    return SolveReport(
        coupling=coupling,
        potentials=Potentials(u.copy(), v.copy()),
        iterations=it,
        marginal_error=float(err),
        value=entropic_value(coupling, kernel),
        converged=bool(converged),
        k=kernel.k,
        transport_value=renormalized_value(coupling, kernel),
        transport_cost=float(np.sum(pi[pi > 0] * kernel.cost[pi > 0])),
    )


def moving_constraint(mu1: DiscreteMeasure, kernel: GibbsKernel) -> DiscreteMeasure:
    """Relocate each atom of mu1 to the nearest reachable target-support point.

    The result is expressed on the full kernel target support (zero weight on
    unused points) so that it can be passed straight to ``sinkhorn``. Ties go to
    the lowest index.
    """
    tgt = kernel.target_support
    reach = np.flatnonzero(kernel.reachable())
    if reach.size == 0:
        raise InfeasibleError("no reachable target points")
    if mu1.dim != tgt.shape[1]:
        raise ValueError("dimension mismatch between mu1 and the target support")
    index = {point_key(p): j for j, p in enumerate(tgt)}
    reach_set = set(reach.tolist())
    w = np.zeros(len(tgt))
    for pt, wt in zip(mu1.points, mu1.weights):
        j = index.get(point_key(pt))
        if j is None or j not in reach_set:
            d = np.linalg.norm(tgt[reach] - pt, axis=1)
            j = int(reach[np.argmin(d)])
        w[j] += wt
    return DiscreteMeasure(tgt, w)


def on_support(mu: DiscreteMeasure, support) -> DiscreteMeasure:
    """Express mu on a larger support (every atom of mu must belong to it)."""
    support = np.asarray(support, dtype=float)
    if support.ndim == 1:
        support = support[:, None]
    index = {point_key(p): j for j, p in enumerate(support)}
    w = np.zeros(len(support))
    for pt, wt in zip(mu.points, mu.weights):
        j = index.get(point_key(pt))
        if j is None:
            raise ValueError(f"atom {pt.tolist()} is not in the support")
        w[j] += wt
    return DiscreteMeasure(support, w)


@dataclass
class AnnealRow:
    k: float
    value: float = np.nan
    transport_value: float = np.nan
    gap: float = np.nan
    tv: float = np.nan
    iterations: int = 0
    converged: bool = False
    error: str = ""
    report: SolveReport | None = field(default=None, repr=False)
    target: DiscreteMeasure | None = field(default=None, repr=False)


@dataclass
class AnnealReport:
    rows: list[AnnealRow]
    oracle_value: float = np.nan
    oracle_unique: bool = False


def anneal(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cost, reference: DiscreteMeasure | None = None,
           schedule=(4, 16, 64, 256, 1024, 4096), tol: float = DEFAULT_TOL,
           max_iter: int = DEFAULT_MAX_ITER, oracle: bool = True, warm_start: bool = True) -> AnnealReport:
    """Solve along an increasing schedule of k, warm-starting from the previous potentials.

    ``cost`` is either a CostFunction or a precomputed matrix over
    (mu0 support, reference support). The reference defaults to the uniform
    measure on mu1's support. Solver errors are recorded per row.
    """
    from .cost_engine import CostFunction, cost_matrix
    from .oracle import lp_solve

    schedule = [float(k) for k in schedule]
    if not schedule or np.any(np.diff(schedule) <= 0):
        raise ValueError("schedule must be nonempty and strictly increasing")
    r = reference if reference is not None else DiscreteMeasure.uniform(mu1.points)
    cmat = cost_matrix(cost, mu0.points, r.points) if isinstance(cost, CostFunction) else np.asarray(cost, float)

    rows: list[AnnealRow] = []
    warm: Potentials | None = None
    k_prev = None
    oracle_cache: dict[bytes, object] = {}
    report = AnnealReport(rows)
    for k in schedule:
        row = AnnealRow(k)
        rows.append(row)
        try:
            kernel = build_kernel(mu0, r, cmat, k)
            target = moving_constraint(mu1, kernel)
            row.target = target
            start = warm.scaled(k / k_prev) if (warm_start and warm is not None) else None
            sol = sinkhorn(kernel, target, tol=tol, max_iter=max_iter, warm=start)
        except InfeasibleError as exc:
            row.error = f"infeasible: {exc}"
            continue
        row.report = sol
        row.value = sol.value
        row.transport_value = sol.transport_value
        row.iterations = sol.iterations
        row.converged = sol.converged
        if not sol.converged:
            row.error = "unconverged"
        warm, k_prev = sol.potentials, k
        if oracle:
            key = target.weights.tobytes()
            if key not in oracle_cache:
                oracle_cache[key] = lp_solve(mu0, target, cmat)
            res = oracle_cache[key]
            row.gap = sol.transport_value - res.value
            report.oracle_value = res.value
            report.oracle_unique = res.unique
            if res.unique:
                row.tv = tv_distance(sol.coupling, res.plan)
    return report
