"""Path actions, geodesics, Brownian bridges and interpolation flows.

Paths are piecewise linear with explicit knots, so Mogulskii-type actions, whose
integrand only depends on the (piecewise constant) velocity, are computed exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .cost_engine import CramerTransform, StandardNormal, Twist
from .measures import Coupling, DiscreteMeasure, marginal, point_key

DEFAULT_KNOTS = 64
DEFAULT_GRID = 512
GRID_SIGMAS = 5.0
COVERAGE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PiecewiseLinearPath:
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if t.size < 2 or p.shape[0] != t.size:
            raise ValueError("a path needs at least two knots and one point per time")
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ValueError("knot times must increase strictly from 0 to 1")
        if not np.all(np.isfinite(p)):
            raise ValueError("path points must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def __call__(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.points[:, j])
                         for j in range(self.points.shape[1])])

    def refine(self, extra_times) -> "PiecewiseLinearPath":
        """Insert knots by linear interpolation (the path itself is unchanged)."""
        t = np.union1d(self.times, np.asarray(extra_times, dtype=float))
        return PiecewiseLinearPath(t, np.array([self(s) for s in t]))

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, data) -> "PiecewiseLinearPath":
        return cls(np.asarray(data["times"]), np.asarray(data["points"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class ActionFunctional:
    """Integral of c_Z over the velocity of a path, optionally pulled back through a twist."""

    transform: CramerTransform
    twist: Twist | None = None

    @property
    def kind(self) -> str:
        return "twisted_walk" if self.twist is not None else "mogulskii"


def kinetic(d: int = 1) -> ActionFunctional:
    return ActionFunctional(CramerTransform(StandardNormal(d)))


def mogulskii(ct: CramerTransform) -> ActionFunctional:
    return ActionFunctional(ct)


def twisted_walk(ct: CramerTransform, tw: Twist) -> ActionFunctional:
    return ActionFunctional(ct, tw)


@dataclass(frozen=True)
class GeodesicResult:
    path: PiecewiseLinearPath
    cost: float


def _pullback(tw: Twist, omega: PiecewiseLinearPath) -> np.ndarray:
    # knot-wise inverse of Phi_t(w) = w_0 + alpha_t(w_t - w_0)
    x0 = omega.start
    out = np.empty_like(omega.points)
    out[0] = x0
    with np.errstate(all="ignore"):
        for i in range(1, len(omega.times)):
            out[i] = x0 + tw.beta(omega.points[i] - x0, omega.times[i])
    return out


def action(af: ActionFunctional, omega: PiecewiseLinearPath) -> float:
    """Sum over segments of dt * c_Z(velocity).

    For twisted walks the knots are first mapped back through beta_t and the
    Mogulskii action of the resulting piecewise-linear path is returned.
    """
    pts = omega.points if af.twist is None else _pullback(af.twist, omega)
    if not np.all(np.isfinite(pts)):
        return np.inf
    dt = np.diff(omega.times)
    vel = np.diff(pts, axis=0) / dt[:, None]
    costs = af.transform.evaluate(vel)
    if np.any(np.isinf(costs)):
        return np.inf
    return float(np.sum(dt * costs))


def _straight(x, y) -> PiecewiseLinearPath:
    return PiecewiseLinearPath([0.0, 1.0], np.vstack([x, y]))


def geodesic(af: ActionFunctional, x, y, knots: int | np.ndarray = DEFAULT_KNOTS) -> GeodesicResult:
    """Closed-form minimizer of the action between x and y.

    Mogulskii actions give the constant-velocity segment. Twisted walks give
    t -> x + alpha_t(t beta_1(y - x)) sampled at ``knots`` (a count of uniform knots
    or an explicit increasing time grid).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if af.twist is None:
        return GeodesicResult(_straight(x, y), af.transform(y - x))
    tw = af.twist
    with np.errstate(all="ignore"):
        u = tw.beta(y - x, 1.0)
    if not np.all(np.isfinite(u)):
        return GeodesicResult(_straight(x, y), np.inf)
    cost = af.transform(u)
    if not np.isfinite(cost):
        return GeodesicResult(_straight(x, y), np.inf)
    times = np.linspace(0.0, 1.0, knots) if np.isscalar(knots) else np.asarray(knots, dtype=float)
    pts = np.array([x + tw.alpha(t * u, t) for t in times])
    pts[0], pts[-1] = x, y
    return GeodesicResult(PiecewiseLinearPath(times, pts), cost)


def static_cost(af: ActionFunctional, x, y) -> float:
    return geodesic(af, x, y).cost


def brownian_bridge_marginal(k: int, x, y, t: float) -> tuple[np.ndarray, float]:
    """Mean and per-coordinate variance at time t of the bridge of x + B_t / sqrt(k)."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return (1 - t) * x + t * y, t * (1 - t) / k


def _merge_atoms(locs: np.ndarray, w: np.ndarray) -> DiscreteMeasure:
    acc: dict[tuple, list] = {}
    for loc, wt in zip(locs, w):
        if wt <= 0:
            continue
        slot = acc.setdefault(point_key(loc), [loc, 0.0])
        slot[1] += wt
    pts = np.array([v[0] for v in acc.values()])
    wts = np.array([v[1] for v in acc.values()])
    return DiscreteMeasure(pts, wts / wts.sum())


def displacement_interpolation(pi: Coupling, t: float) -> DiscreteMeasure:
    """Atoms (1 - t) x_i + t y_j carrying the plan weights, coincident atoms merged."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return marginal(pi, "source").positive_part()
    if t == 1.0:
        return marginal(pi, "target").positive_part()
    src, tgt = pi.source_support, pi.target_support
    locs = (1 - t) * src[:, None, :] + t * tgt[None, :, :]
    return _merge_atoms(locs.reshape(-1, src.shape[1]), pi.weights.ravel())


def default_flow_grid(pi: Coupling, k: int, t: float, size: int = DEFAULT_GRID) -> np.ndarray:
    locs = ((1 - t) * pi.source_support[:, None, 0] + t * pi.target_support[None, :, 0])
    active = locs[pi.weights > 0]
    sigma = np.sqrt(t * (1 - t) / k)
    return np.linspace(active.min() - GRID_SIGMAS * sigma, active.max() + GRID_SIGMAS * sigma, size)


def mixture_flow(pi: Coupling, k: int, t: float, eval_grid=None) -> DiscreteMeasure:
    """Time-t marginal of the mixture of Brownian bridges under the plan ``pi``.

    The Gaussian-mixture density is evaluated on a 1-D grid and renormalized.
    ``meta`` carries the mixture mass covered by the grid cells and a
    ``coverage_warning`` flag when it falls below 1 - 1e-6.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return marginal(pi, "source")
    if t == 1.0:
        return marginal(pi, "target")
    if pi.source_support.shape[1] != 1:
        raise ValueError("grid evaluation of the mixture flow needs d = 1")
    grid = default_flow_grid(pi, k, t) if eval_grid is None else np.asarray(eval_grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("empty evaluation grid")
    grid = np.sort(grid)
    sigma = np.sqrt(t * (1 - t) / k)
    w = pi.weights.ravel()
    keep = w > 0
    means = ((1 - t) * pi.source_support[:, None, 0] + t * pi.target_support[None, :, 0]).ravel()[keep]
    w = w[keep]
    dens = norm.pdf(grid[:, None], loc=means[None, :], scale=sigma) @ w
    if dens.sum() <= 0:
        raise ValueError("evaluation grid carries no mixture mass")
    if grid.size > 1:
        half = 0.5 * np.diff(grid)
        lo, hi = grid[0] - half[0], grid[-1] + half[-1]
    else:
        lo, hi = grid[0] - sigma, grid[0] + sigma
    covered = float(w @ (norm.cdf(hi, means, sigma) - norm.cdf(lo, means, sigma)))
    meta = {"coverage": covered, "coverage_warning": covered < 1 - COVERAGE_TOL, "k": k, "t": t}
    return DiscreteMeasure(grid, dens / dens.sum(), meta)
