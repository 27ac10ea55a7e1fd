"""Static costs built from Cramer transforms of source laws.

A source law m_Z is turned into the cost c_Z(v) = sup_zeta {zeta.v - log E exp(zeta.Z)}.
The four catalog laws have closed forms; any law can also be conjugated
numerically by safeguarded Newton on the derivative of the log-Laplace transform.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.special import logsumexp

from .measures import point_key

BRACKET_LIMIT = 1e6

LAW_KINDS = ("normal", "rademacher", "exponential1", "poisson1", "finite")


@dataclass(frozen=True, eq=False)
class SourceLaw:
    """Law of the increment Z. Use the module-level constructors."""

    kind: str
    dim: int = 1
    support: np.ndarray | None = None
    probs: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ValueError(f"unknown law kind {self.kind!r}")
        if self.kind != "normal" and self.dim != 1:
            raise ValueError(f"{self.kind} law is one-dimensional")
        if self.kind == "finite":
            z = np.asarray(self.support, dtype=float).ravel()
            p = np.asarray(self.probs, dtype=float).ravel()
            if z.shape != p.shape or z.size == 0:
                raise ValueError("finite law needs matching nonempty support and probs")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("finite law probs must be nonnegative and sum to 1")
            keep = p > 0
            order = np.argsort(z[keep])
            object.__setattr__(self, "support", z[keep][order])
            object.__setattr__(self, "probs", p[keep][order])

    @property
    def mean(self) -> np.ndarray:
        if self.kind in ("normal", "rademacher"):
            return np.zeros(self.dim)
        if self.kind in ("exponential1", "poisson1"):
            return np.ones(1)
        return np.array([self.probs @ self.support])

    def support_bounds(self) -> tuple[float, float]:
        """Closed convex hull of the support (per coordinate)."""
        return {
            "normal": (-np.inf, np.inf),
            "rademacher": (-1.0, 1.0),
            "exponential1": (0.0, np.inf),
            "poisson1": (0.0, np.inf),
        }.get(self.kind) or (float(self.support[0]), float(self.support[-1]))

    def atom_mass(self, z: float) -> float:
        if self.kind == "rademacher":
            return 0.5 if abs(z) == 1.0 else 0.0
        if self.kind == "poisson1":
            return math.exp(-1.0) / math.factorial(int(z)) if z >= 0 and z == int(z) else 0.0
        if self.kind == "finite":
            hit = self.support == z
            return float(self.probs[hit].sum())
        return 0.0

    def zeta_sup(self) -> float:
        """Supremum of the (1-D) domain where the log-Laplace transform is finite."""
        return 1.0 if self.kind == "exponential1" else np.inf

    # one-dimensional log-Laplace and its first two derivatives
    def _lam(self, z: float) -> tuple[float, float, float]:
        k = self.kind
        if k == "normal":
            return 0.5 * z * z, z, 1.0
        if k == "rademacher":
            a = abs(z)
            th = math.tanh(z)
            return a + math.log1p(math.exp(-2 * a)) - math.log(2.0), th, 1.0 - th * th
        if k == "exponential1":
            if z >= 1.0:
                return np.inf, np.inf, np.inf
            return -math.log1p(-z), 1.0 / (1.0 - z), 1.0 / (1.0 - z) ** 2
        if k == "poisson1":
            e = math.exp(z)
            return math.expm1(z), e, e
        logw = np.log(self.probs) + z * self.support
        lse = float(logsumexp(logw))
        w = np.exp(logw - lse)
        m1 = float(w @ self.support)
        return lse, m1, float(w @ (self.support - m1) ** 2)


def StandardNormal(d: int = 1) -> SourceLaw:
    return SourceLaw("normal", dim=int(d))


def Rademacher() -> SourceLaw:
    return SourceLaw("rademacher")


def Exponential1() -> SourceLaw:
    return SourceLaw("exponential1")


def Poisson1() -> SourceLaw:
    return SourceLaw("poisson1")


def FiniteSupport(points, probs) -> SourceLaw:
    return SourceLaw("finite", support=np.asarray(points, dtype=float),
                     probs=np.asarray(probs, dtype=float))


def _vec(law: SourceLaw, v) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape[-1] != law.dim:
        if law.dim == 1:
            v = v[..., None]
        else:
            raise ValueError(f"expected vectors of dimension {law.dim}, got shape {v.shape}")
    return v


def log_laplace(law: SourceLaw, zeta) -> float:
    """log E exp(zeta.Z); +inf outside the finiteness domain."""
    zeta = _vec(law, zeta)
    if zeta.shape != (law.dim,):
        raise ValueError(f"expected a single vector of dimension {law.dim}")
    if law.kind == "normal":
        return float(0.5 * zeta @ zeta)
    return float(law._lam(float(zeta[0]))[0])


def _conjugate_1d(law: SourceLaw, v: float) -> float:
    lo, hi = law.support_bounds()
    if law.kind == "normal":
        lo, hi = -np.inf, np.inf
    if v < lo or v > hi:
        return np.inf
    if v == lo or v == hi:
        mass = law.atom_mass(v)
        return -math.log(mass) if mass > 0 else np.inf

    def g(z):
        return law._lam(z)[1] - v

    zmax = law.zeta_sup()
    a, b = -1.0, min(1.0, 0.5 * (zmax + 0.0) if np.isfinite(zmax) else 1.0)
    while g(a) > 0:
        a *= 2.0
        if abs(a) > BRACKET_LIMIT:
            return _boundary_value(law, lo)
    while g(b) < 0:
        b = 2.0 * b if not np.isfinite(zmax) else zmax - 0.5 * (zmax - b)
        if abs(b) > BRACKET_LIMIT or (np.isfinite(zmax) and zmax - b < 1e-15):
            return _boundary_value(law, hi)

    z = 0.5 * (a + b) if not (a < 0.0 < b) else 0.0
    for _ in range(200):
        _, d1, d2 = law._lam(z)
        gz = d1 - v
        if gz > 0:
            b = z
        else:
            a = z
        if abs(gz) <= 1e-15 * max(1.0, abs(v)) or b - a <= 1e-15 * max(1.0, abs(z)):
            break
        step = z - gz / d2 if d2 > 0 else np.nan
        z = step if a < step < b else 0.5 * (a + b)
    lam = law._lam(z)[0]
    return max(z * v - lam, 0.0)


def _boundary_value(law: SourceLaw, end: float) -> float:
    mass = law.atom_mass(end) if np.isfinite(end) else 0.0
    return -math.log(mass) if mass > 0 else np.inf


def _closed_form(kind: str, v: np.ndarray) -> np.ndarray:
    """Catalog formulas, vectorized over the leading axes of v (..., d)."""
    if kind == "normal":
        return 0.5 * np.sum(v * v, axis=-1)
    x = v[..., 0]
    out = np.full(x.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "rademacher":
            inner = np.abs(x) < 1
            xi = x[inner]
            out[inner] = 0.5 * ((1 + xi) * np.log1p(xi) + (1 - xi) * np.log1p(-xi))
            out[np.abs(x) == 1] = math.log(2.0)
        elif kind == "exponential1":
            pos = x > 0
            out[pos] = x[pos] - 1 - np.log(x[pos])
        elif kind == "poisson1":
            pos = x > 0
            out[pos] = x[pos] * np.log(x[pos]) - x[pos] + 1
            out[x == 0] = 1.0
        else:
            raise ValueError(f"no closed form for {kind!r}")
    return out


@dataclass(frozen=True)
class CramerTransform:
    """c_Z for a source law, evaluated by catalog formula or numerically."""

    law: SourceLaw
    mode: str = "closed_form"

    def __post_init__(self):
        if self.mode not in ("closed_form", "numerical"):
            raise ValueError(f"mode must be 'closed_form' or 'numerical', not {self.mode!r}")

    @property
    def dim(self) -> int:
        return self.law.dim

    def evaluate(self, v) -> np.ndarray:
        """Vectorized c_Z over an array of displacement vectors of shape (..., d)."""
        v = _vec(self.law, v)
        if self.mode == "closed_form" and self.law.kind != "finite":
            return _closed_form(self.law.kind, v)
        flat = v.reshape(-1, self.dim)
        vals = np.array([sum(_conjugate_1d(self.law, float(c)) for c in row) for row in flat])
        return vals.reshape(v.shape[:-1])

    def __call__(self, v) -> float:
        v = _vec(self.law, v)
        if v.shape != (self.dim,):
            raise ValueError(f"expected a single vector of dimension {self.dim}")
        return float(self.evaluate(v))


def cramer(ct: CramerTransform, v) -> float:
    return ct(v)


def affine_transport(ct: CramerTransform, a, b, v) -> float:
    """Cramer transform of aZ + b at v, i.e. c_Z(a^{-1}(v - b))."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if a.shape != (v.size, v.size) or np.linalg.matrix_rank(a) < v.size:
        raise ValueError("affine map must be square and invertible")
    return ct(np.linalg.solve(a, v - b))


@dataclass(frozen=True)
class Twist:
    """Continuous injective map alpha with inverse beta, optionally time-indexed.

    Both maps are called as ``f(v, t)`` on arrays of shape (..., d); time-independent
    twists ignore ``t``.
    """

    forward: Callable[[np.ndarray, float], np.ndarray]
    inverse: Callable[[np.ndarray, float], np.ndarray]
    time_dependent: bool = False
    name: str = "twist"

    def alpha(self, v, t: float = 1.0) -> np.ndarray:
        return self.forward(np.asarray(v, dtype=float), t)

    def beta(self, w, t: float = 1.0) -> np.ndarray:
        return self.inverse(np.asarray(w, dtype=float), t)


def identity_twist() -> Twist:
    return Twist(lambda v, t: v, lambda w, t: w, name="identity")


def _radial(v: np.ndarray, expo: float, scale: float) -> np.ndarray:
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(r > 0, scale * r ** expo, 0.0)
    return f * v


def power_twist(p: float) -> Twist:
    """alpha_p(v) = 2^{-1/p} |v|^{2/p - 1} v; with a standard normal law, c_Z o beta = |.|^p."""
    if p <= 0:
        raise ValueError("power must be positive")
    return Twist(lambda v, t: _radial(v, 2.0 / p - 1.0, 2.0 ** (-1.0 / p)),
                 lambda w, t: _radial(w, p / 2.0 - 1.0, math.sqrt(2.0)),
                 name=f"power[{p:g}]")


def ramp_twist(rate: float = 1.0) -> Twist:
    """Time-dependent linear twist alpha_t(v) = (1 + rate t) v."""
    if rate <= -1:
        raise ValueError("rate must exceed -1 so that alpha_t stays injective")
    return Twist(lambda v, t: (1.0 + rate * t) * v,
                 lambda w, t: w / (1.0 + rate * t),
                 time_dependent=True, name=f"ramp[{rate:g}]")


def twisted_cost(ct: CramerTransform, tw: Twist, x, y) -> float:
    w = np.atleast_1d(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
    with np.errstate(all="ignore"):
        u = tw.beta(w, 1.0)
    if not np.all(np.isfinite(u)):
        return np.inf
    return ct(u)


def walk_displacements(law: SourceLaw, steps: int) -> np.ndarray:
    """Possible values of the mean of ``steps`` i.i.d. draws of a finite-support law."""
    if law.kind == "rademacher":
        atoms = np.array([-1.0, 1.0])
    elif law.kind == "finite":
        atoms = law.support
    else:
        raise ValueError("walk lattices need a law with isolated atoms")
    sums = {0.0}
    for _ in range(int(steps)):
        sums = {s + z for s in sums for z in atoms}
    return np.array(sorted(sums)) / steps


@dataclass(frozen=True, eq=False)
class CostFunction:
    """A static cost c(x, y).

    kinds: ``cramer`` (c_Z(y - x)), ``twisted`` (c_Z(beta(y - x))), ``power``
    (scale |y - x|^p), ``walk`` (c_Z(y - x) restricted to displacements reachable by
    a ``steps``-step walk, +inf elsewhere) and ``table`` (explicit matrix).
    """

    kind: str
    transform: CramerTransform | None = None
    twist: Twist | None = None
    p: float = 2.0
    scale: float = 1.0
    steps: int = 0
    table: np.ndarray | None = None
    spec: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("cramer", "twisted", "power", "walk", "table"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind in ("cramer", "twisted", "walk") and self.transform is None:
            raise ValueError(f"{self.kind} cost needs a Cramer transform")
        if self.kind == "twisted" and self.twist is None:
            raise ValueError("twisted cost needs a twist")
        if self.kind == "table" and self.table is None:
            raise ValueError("table cost needs a matrix")

    def on_displacements(self, w: np.ndarray) -> np.ndarray:
        if self.kind == "power":
            return self.scale * np.linalg.norm(w, axis=-1) ** self.p
        if self.kind == "cramer":
            return self.transform.evaluate(w)
        if self.kind == "twisted":
            with np.errstate(all="ignore"):
                u = self.twist.beta(w, 1.0)
            out = self.transform.evaluate(np.where(np.isfinite(u), u, 0.0))
            return np.where(np.all(np.isfinite(u), axis=-1), out, np.inf)
        if self.kind == "walk":
            lattice = {point_key([z]) for z in walk_displacements(self.transform.law, self.steps)}
            reach = np.array([point_key(r) in lattice for r in w.reshape(-1, w.shape[-1])])
            out = self.transform.evaluate(w)
            return np.where(reach.reshape(w.shape[:-1]), out, np.inf)
        raise ValueError("table costs have no displacement form")

    def __call__(self, x, y) -> float:
        w = np.atleast_1d(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
        return float(self.on_displacements(w[None, :])[0])


def cost_matrix(cf: CostFunction, src, tgt) -> np.ndarray:
    src = np.asarray(src, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    if src.ndim == 1:
        src = src[:, None]
    if tgt.ndim == 1:
        tgt = tgt[:, None]
    if cf.kind == "table":
        if cf.table.shape != (src.shape[0], tgt.shape[0]):
            raise ValueError(f"table shape {cf.table.shape} does not match supports")
        return np.array(cf.table, dtype=float)
    if src.shape[1] != tgt.shape[1]:
        raise ValueError("source and target dimensions differ")
    w = tgt[None, :, :] - src[:, None, :]
    return np.asarray(cf.on_displacements(w), dtype=float)


def law_from_name(name, dim: int = 1) -> SourceLaw:
    if isinstance(name, Mapping):
        return FiniteSupport(name["points"], name["probs"])
    table = {"normal": lambda: StandardNormal(dim), "rademacher": Rademacher,
             "exponential1": Exponential1, "poisson1": Poisson1}
    try:
        return table[name]()
    except KeyError:
        raise ValueError(f"unknown law {name!r}") from None


def read_cost_table(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[float(cell) for cell in row] for row in csv.reader(fh) if row]
    table = np.array(rows, dtype=float)
    if table.ndim != 2 or np.any(np.isnan(table)) or np.any(table == -np.inf):
        raise ValueError(f"malformed cost table {path}")
    return table


def cost_from_spec(spec: Mapping, dim: int = 1, base_dir=".") -> CostFunction:
    """Build a CostFunction from its JSON config form."""
    kind = spec.get("kind")
    mode = spec.get("mode", "closed_form")
    if kind == "power":
        return CostFunction("power", p=float(spec["p"]), scale=float(spec.get("scale", 1.0)), spec=spec)
    if kind == "cramer":
        return CostFunction("cramer", CramerTransform(law_from_name(spec["law"], dim), mode), spec=spec)
    if kind == "twisted":
        ct = CramerTransform(law_from_name(spec.get("law", "normal"), dim), mode)
        return CostFunction("twisted", ct, power_twist(float(spec["power_p"])), spec=spec)
    if kind == "walk":
        ct = CramerTransform(law_from_name(spec["law"], dim), mode)
        return CostFunction("walk", ct, steps=int(spec["steps"]), spec=spec)
    if kind == "table":
        return CostFunction("table", table=read_cost_table(Path(base_dir) / spec["path"]), spec=spec)
    raise ValueError(f"unknown cost kind {kind!r}")
