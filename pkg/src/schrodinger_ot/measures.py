"""Discrete probability measures, couplings and the distances used to certify convergence."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

MASS_TOL = 1e-12
SIG_DIGITS = 12


def point_key(coords) -> tuple:
    """Canonical identity of a point: coordinates rounded to 12 significant digits.

    Coordinates below 1e-12 in magnitude count as zero, so round-off residue such
    as 0.1 + 0.2 - 0.3 matches the origin.
    """
    return tuple(0.0 if abs(c) < 1e-12 else float(f"{float(c):.{SIG_DIGITS - 1}e}")
                 for c in np.ravel(coords))


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] < 1:
        raise ValueError(f"points must be an (n, d) array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point coordinates must be finite")
    return pts


def _check_distinct(pts: np.ndarray, what: str) -> None:
    keys = [point_key(p) for p in pts]
    if len(set(keys)) != len(keys):
        raise ValueError(f"{what} points are not pairwise distinct")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted finite point set in R^d.

    ``points`` has shape (n, d) and ``weights`` shape (n,). Weights must sum to 1
    within 1e-12; drift is rejected rather than renormalized.
    """

    points: np.ndarray
    weights: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        pts = _as_points(self.points)
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != pts.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if pts.shape[0] == 0:
            raise ValueError("empty measure")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        _check_distinct(pts, "measure")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = _as_points(points)
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def positive_part(self) -> "DiscreteMeasure":
        keep = self.weights > 0
        return DiscreteMeasure(self.points[keep], self.weights[keep], dict(self.meta))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "DiscreteMeasure":
        pts = np.asarray(data["points"], dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if "dim" in data and pts.shape[1] != int(data["dim"]):
            raise ValueError(f"declared dim {data['dim']} but points have dim {pts.shape[1]}")
        return cls(pts, np.asarray(data["weights"], dtype=float))


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint weight matrix over a source x target support."""

    source_support: np.ndarray
    target_support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        src = _as_points(self.source_support)
        tgt = _as_points(self.target_support)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (src.shape[0], tgt.shape[0]):
            raise ValueError(f"weights shape {w.shape} does not match supports "
                             f"({src.shape[0]}, {tgt.shape[0]})")
        if src.shape[1] != tgt.shape[1]:
            raise ValueError("source and target supports have different dimensions")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("coupling weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"coupling weights sum to {w.sum()!r}, not 1")
        _check_distinct(src, "source")
        _check_distinct(tgt, "target")
        for a in (src, tgt, w):
            a.flags.writeable = False
        object.__setattr__(self, "source_support", src)
        object.__setattr__(self, "target_support", tgt)
        object.__setattr__(self, "weights", w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    @classmethod
    def product(cls, p: DiscreteMeasure, q: DiscreteMeasure) -> "Coupling":
        return cls(p.points, q.points, np.outer(p.weights, q.weights))

    def to_measure(self) -> DiscreteMeasure:
        """The coupling as a measure on R^{2d} (pairs stacked as (x, y))."""
        n, m = self.shape
        pairs = np.hstack([np.repeat(self.source_support, m, axis=0),
                           np.tile(self.target_support, (n, 1))])
        return DiscreteMeasure(pairs, self.weights.ravel())

    def to_dict(self) -> dict:
        return {
            "dim": self.source_support.shape[1],
            "source_support": self.source_support.tolist(),
            "target_support": self.target_support.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Coupling":
        return cls(np.asarray(data["source_support"], dtype=float),
                   np.asarray(data["target_support"], dtype=float),
                   np.asarray(data["weights"], dtype=float))


def marginal(c: Coupling, side: str) -> DiscreteMeasure:
    if side == "source":
        return DiscreteMeasure(c.source_support, c.weights.sum(axis=1))
    if side == "target":
        return DiscreteMeasure(c.target_support, c.weights.sum(axis=0))
    raise ValueError(f"side must be 'source' or 'target', not {side!r}")


def _weights_of(p) -> np.ndarray:
    if isinstance(p, Coupling):
        return p.weights
    if isinstance(p, DiscreteMeasure):
        return p.weights
    return np.asarray(p, dtype=float)


def relative_entropy(p, q) -> float:
    """sum p log(p/q) with 0 log(0/q) = 0; +inf when p charges a q-null atom."""
    p = _weights_of(p)
    q = _weights_of(q)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    p = p.ravel()
    q = q.ravel()
    charged = p > 0
    if np.any(q[charged] <= 0):
        return np.inf
    pp, qq = p[charged], q[charged]
    return float(np.sum(pp * (np.log(pp) - np.log(qq))))


def _merged_weights(p: DiscreteMeasure, q: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    index: dict[tuple, int] = {}
    for pt in np.vstack([p.points, q.points]):
        index.setdefault(point_key(pt), len(index))
    wp = np.zeros(len(index))
    wq = np.zeros(len(index))
    for pt, w in zip(p.points, p.weights):
        wp[index[point_key(pt)]] += w
    for pt, w in zip(q.points, q.weights):
        wq[index[point_key(pt)]] += w
    return wp, wq


def tv_distance(p, q) -> float:
    """Total variation (1/2) sum |p_i - q_i| over the merged support.

    Couplings are compared entrywise when they share supports, otherwise as
    measures on the product space.
    """
    if isinstance(p, Coupling) and isinstance(q, Coupling):
        if (p.shape == q.shape and np.array_equal(p.source_support, q.source_support)
                and np.array_equal(p.target_support, q.target_support)):
            return float(0.5 * np.abs(p.weights - q.weights).sum())
        p, q = p.to_measure(), q.to_measure()
    wp, wq = _merged_weights(p, q)
    return float(0.5 * np.abs(wp - wq).sum())


def wasserstein1_1d(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    """W1 on the line as the integral of |F_p - F_q|, exact for finite supports."""
    if p.dim != 1 or q.dim != 1:
        raise ValueError("wasserstein1_1d requires one-dimensional measures")
    x = np.concatenate([p.points[:, 0], q.points[:, 0]])
    w = np.concatenate([p.weights, -q.weights])
    order = np.argsort(x, kind="mergesort")
    x, w = x[order], w[order]
    cdf_diff = np.cumsum(w)[:-1]
    return float(np.sum(np.abs(cdf_diff) * np.diff(x)))


def entropy_chain_rule_residual(P: Coupling, R: Coupling) -> float:
    """H(P|R) minus its source-marginal plus conditional decomposition.

    Zero up to rounding whenever H(P|R) is finite; returns nan otherwise.
    """
    if P.shape != R.shape:
        raise ValueError(f"shape mismatch: {P.shape} vs {R.shape}")
    total = relative_entropy(P, R)
    if not np.isfinite(total):
        return np.nan
    p_src = P.weights.sum(axis=1)
    r_src = R.weights.sum(axis=1)
    cond = 0.0
    for i in np.flatnonzero(p_src > 0):
        cond += p_src[i] * relative_entropy(P.weights[i] / p_src[i], R.weights[i] / r_src[i])
    return total - (relative_entropy(p_src, r_src) + cond)


def load_measure(path) -> DiscreteMeasure:
    with open(path, encoding="utf-8") as fh:
        return DiscreteMeasure.from_dict(json.load(fh))
