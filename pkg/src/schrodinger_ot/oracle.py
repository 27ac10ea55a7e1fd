"""Exact discrete optimal transport by the transportation simplex.

Forbidden (+inf) cells get a big-M price; a plan that still uses one after
optimization means the instance is infeasible.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import Coupling, DiscreteMeasure

REDUCED_COST_TOL = 1e-10
MASS_TOL = 1e-12


class DegeneracyError(RuntimeError):
    """The simplex exceeded its pivot budget."""


@dataclass(frozen=True, eq=False)
class OracleResult:
    plan: Coupling | None
    value: float
    unique: bool
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    pivots: int = 0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "unique": self.unique,
            "plan": None if self.plan is None else self.plan.to_dict(),
        }


def _mass_check(mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> None:
    if abs(mu0.weights.sum() - mu1.weights.sum()) > MASS_TOL:
        raise ValueError("source and target masses differ")


def _northwest(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int]]:
    n, m = len(a), len(b)
    a, b = a.copy(), b.copy()
    i = j = 0
    basis = []
    while i < n and j < m:
        basis.append((i, j))
        q = min(a[i], b[j])
        a[i] -= q
        b[j] -= q
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return basis


def _tree_flows(basis, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Flows on a spanning-tree basis by leaf elimination."""
    n, m = len(a), len(b)
    x = np.zeros((n, m))
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    adj_r = [set() for _ in range(n)]
    adj_c = [set() for _ in range(m)]
    for i, j in basis:
        adj_r[i].add(j)
        adj_c[j].add(i)
    queue = deque([("r", i) for i in range(n) if len(adj_r[i]) == 1]
                  + [("c", j) for j in range(m) if len(adj_c[j]) == 1])
    while queue:
        side, idx = queue.popleft()
        if side == "r":
            if len(adj_r[idx]) != 1:
                continue
            j = adj_r[idx].pop()
            adj_c[j].discard(idx)
            x[idx, j] = ra[idx]
            rb[j] -= ra[idx]
            ra[idx] = 0.0
            if len(adj_c[j]) == 1:
                queue.append(("c", j))
        else:
            if len(adj_c[idx]) != 1:
                continue
            i = adj_c[idx].pop()
            adj_r[i].discard(idx)
            x[i, idx] = rb[idx]
            ra[i] -= rb[idx]
            rb[idx] = 0.0
            if len(adj_r[i]) == 1:
                queue.append(("r", i))
    return x


def _duals(basis, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, m = c.shape
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    rows: dict[int, list[int]] = {}
    cols: dict[int, list[int]] = {}
    for i, j in basis:
        rows.setdefault(i, []).append(j)
        cols.setdefault(j, []).append(i)
    u[0] = 0.0
    queue = deque([("r", 0)])
    while queue:
        side, idx = queue.popleft()
        if side == "r":
            for j in rows.get(idx, []):
                if np.isnan(v[j]):
                    v[j] = c[idx, j] - u[idx]
                    queue.append(("c", j))
        else:
            for i in cols.get(idx, []):
                if np.isnan(u[i]):
                    u[i] = c[i, idx] - v[idx]
                    queue.append(("r", i))
    return u, v


def _cycle(basis_set, n: int, m: int, enter: tuple[int, int]) -> list[tuple[int, int]]:
    """Alternating cycle through the entering cell and the basis tree."""
    i0, j0 = enter
    rows: dict[int, list[int]] = {}
    cols: dict[int, list[int]] = {}
    for i, j in basis_set:
        rows.setdefault(i, []).append(j)
        cols.setdefault(j, []).append(i)
    # BFS in the bipartite tree from column j0 to row i0
    start = ("c", j0)
    prev = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == ("r", i0):
            break
        side, idx = node
        nbrs = [("r", i) for i in cols.get(idx, [])] if side == "c" else [("c", j) for j in rows.get(idx, [])]
        for nb in nbrs:
            if nb not in prev:
                prev[nb] = node
                queue.append(nb)
    path = []
    node = ("r", i0)
    while node is not None:
        path.append(node)
        node = prev[node]
    # path runs row i0 -> ... -> column j0; turn node pairs into cells
    cells = [enter]
    for a, b in zip(path[:-1], path[1:]):
        cells.append((a[1], b[1]) if a[0] == "r" else (b[1], a[1]))
    return cells


def _simplex(c: np.ndarray, a: np.ndarray, b: np.ndarray, max_pivots: int, scale: float = 1.0):
    n, m = c.shape
    basis = _northwest(a, b)
    basis_set = set(basis)
    x = _tree_flows(basis, a, b)
    pivots = 0
    while True:
        u, v = _duals(basis_set, c)
        red = c - u[:, None] - v[None, :]
        for cell in basis_set:
            red[cell] = 0.0
        i, j = np.unravel_index(np.argmin(red), red.shape)
        if red[i, j] >= -REDUCED_COST_TOL * scale:
            return basis_set, u, v, red, pivots
        pivots += 1
        if pivots > max_pivots:
            raise DegeneracyError(f"pivot budget {max_pivots} exhausted")
        cyc = _cycle(basis_set, n, m, (int(i), int(j)))
        minus = cyc[1::2]
        leave = min(minus, key=lambda cell: (x[cell], cell))
        theta = x[leave]
        for cell in cyc[0::2]:
            x[cell] += theta
        for cell in minus:
            x[cell] -= theta
        x[leave] = 0.0
        basis_set.remove(leave)
        basis_set.add((int(i), int(j)))


def lp_solve(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cmat) -> OracleResult:
    """Exact optimal plan of the transportation problem; +inf cells are forbidden."""
    _mass_check(mu0, mu1)
    c_in = np.asarray(cmat, dtype=float)
    n, m = len(mu0), len(mu1)
    if c_in.shape != (n, m):
        raise ValueError(f"cost matrix shape {c_in.shape} does not match ({n}, {m})")
    forbidden = np.isinf(c_in)
    if forbidden.all():
        return OracleResult(None, np.inf, False)
    finite = c_in[~forbidden]
    span = float(finite.max() - min(finite.min(), 0.0)) + 1.0
    big_m = span * (n + m) * 1e3
    c = np.where(forbidden, big_m, c_in)

    a0, b0 = mu0.weights.astype(float), mu1.weights.astype(float)
    eps = 1e-9 / (n + m)
    for _ in range(4):
        # Charnes perturbation keeps every basic flow strictly positive
        a = a0 + eps
        b = b0.copy()
        b[-1] += n * eps
        basis, u, v, red, pivots = _simplex(c, a, b, n * m * m, max(1.0, span))
        x = _tree_flows(basis, a0, b0)
        if x.min() >= -1e-12:
            break
        eps *= 1e-3
    else:
        raise DegeneracyError("de-perturbed basis is infeasible")
    x[x < 0] = 0.0
    if np.any(x[forbidden] > MASS_TOL):
        return OracleResult(None, np.inf, False, pivots=pivots)
    x[forbidden] = 0.0
    nonbasic = np.ones((n, m), dtype=bool)
    for cell in basis:
        nonbasic[cell] = False
    nonbasic &= ~forbidden
    unique = bool(np.all(red[nonbasic] > REDUCED_COST_TOL))
    plan = Coupling(mu0.points, mu1.points, x)
    value = float(np.sum(x[x > 0] * c_in[x > 0]))
    return OracleResult(plan, value, unique, u, v, pivots)


def monotone_1d(mu0: DiscreteMeasure, mu1: DiscreteMeasure,
                h: Callable[[np.ndarray], np.ndarray]) -> OracleResult:
    """Quantile coupling on the line; optimal when c(x, y) = h(y - x) with h convex."""
    if mu0.dim != 1 or mu1.dim != 1:
        raise ValueError("monotone_1d requires one-dimensional measures")
    _mass_check(mu0, mu1)
    ia = np.argsort(mu0.points[:, 0], kind="mergesort")
    ib = np.argsort(mu1.points[:, 0], kind="mergesort")
    a = mu0.weights[ia].copy()
    b = mu1.weights[ib].copy()
    x = np.zeros((len(a), len(b)))
    i = j = 0
    while i < len(a) and j < len(b):
        q = min(a[i], b[j])
        x[ia[i], ib[j]] += q
        a[i] -= q
        b[j] -= q
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1
    plan = Coupling(mu0.points, mu1.points, x)
    disp = mu1.points[None, :, 0] - mu0.points[:, None, 0]
    cost = np.asarray(h(disp), dtype=float)
    value = float(np.sum(x[x > 0] * cost[x > 0]))
    return OracleResult(plan, value, False)


def tc_value(mu0: DiscreteMeasure, mu1: DiscreteMeasure, cmat) -> float:
    return lp_solve(mu0, mu1, cmat).value
