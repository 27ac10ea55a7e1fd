"""Convergence experiments along a k schedule, with CSV/JSON emission."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .cost_engine import (CostFunction, CramerTransform, Exponential1, Poisson1, Rademacher,
                          StandardNormal, cost_from_spec, cost_matrix, power_twist)
from .entropic import (DEFAULT_MAX_ITER, DEFAULT_TOL, InfeasibleError, anneal)
from .measures import DiscreteMeasure, wasserstein1_1d
from .oracle import lp_solve
from .paths import (ActionFunctional, PiecewiseLinearPath, action, displacement_interpolation,
                    geodesic, kinetic, mixture_flow, static_cost, twisted_walk)

CANONICAL_SCHEDULE = (4, 16, 64, 256, 1024, 4096)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mu0: DiscreteMeasure
    mu1: DiscreteMeasure
    cost: CostFunction
    schedule: tuple = CANONICAL_SCHEDULE
    reference: DiscreteMeasure | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    out_dir: Path | None = None
    deterministic: bool = False
    times: tuple = (0.0, 0.5, 1.0)
    perturbation: float = 0.0
    seed: int = 0
    warm_start: bool = True

    def __post_init__(self):
        self.schedule = tuple(float(k) for k in self.schedule)
        if not self.schedule or any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ConfigError("schedule must be nonempty and strictly increasing")
        if any(k <= 0 for k in self.schedule):
            raise ConfigError("schedule entries must be positive")
        self.times = tuple(float(t) for t in self.times)
        if any(not 0.0 <= t <= 1.0 for t in self.times):
            raise ConfigError("interpolation times must lie in [0, 1]")

    @property
    def target_reference(self) -> DiscreteMeasure:
        return self.reference if self.reference is not None else DiscreteMeasure.uniform(self.mu1.points)

    def cost_matrix(self) -> np.ndarray:
        c = cost_matrix(self.cost, self.mu0.points, self.target_reference.points)
        if self.perturbation > 0:
            rng = np.random.default_rng(self.seed)
            c = c + self.perturbation * rng.uniform(size=c.shape)
        return c


def canonical_config(**overrides) -> ExperimentConfig:
    """Two atoms to two atoms under |y - x|^2 / 2: oracle value 2, unique monotone plan."""
    base = dict(mu0=DiscreteMeasure.uniform([0.0, 1.0]),
                mu1=DiscreteMeasure.uniform([2.0, 3.0]),
                cost=cost_from_spec({"kind": "cramer", "law": "normal"}))
    base.update(overrides)
    return ExperimentConfig(**base)


def _measure_from(entry, base_dir: Path) -> DiscreteMeasure:
    if isinstance(entry, str):
        with open(base_dir / entry, encoding="utf-8") as fh:
            entry = json.load(fh)
    return DiscreteMeasure.from_dict(entry)


def config_from_dict(data: Mapping[str, Any], base_dir=".") -> ExperimentConfig:
    base_dir = Path(base_dir)
    try:
        mu0 = _measure_from(data["mu0"], base_dir)
        mu1 = _measure_from(data["mu1"], base_dir)
        cost = cost_from_spec(data["cost"], dim=mu0.dim, base_dir=base_dir)
        ref = data.get("reference", "uniform")
        reference = None if ref == "uniform" else _measure_from(ref, base_dir)
        schedule = data.get("schedule", CANONICAL_SCHEDULE)
        if isinstance(schedule, str):
            schedule = [float(s) for s in schedule.split(",") if s.strip()]
        out_dir = data.get("out_dir")
        return ExperimentConfig(
            mu0=mu0, mu1=mu1, cost=cost, schedule=tuple(schedule), reference=reference,
            tol=float(data.get("tol", DEFAULT_TOL)),
            max_iter=int(data.get("max_iter", DEFAULT_MAX_ITER)),
            out_dir=None if out_dir is None else base_dir / out_dir,
            deterministic=bool(data.get("deterministic", False)),
            times=tuple(data.get("times", (0.0, 0.5, 1.0))),
            perturbation=float(data.get("perturbation", 0.0)),
            seed=int(data.get("seed", 0)),
            warm_start=bool(data.get("warm_start", True)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data, path.parent)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


@dataclass
class ConvergenceTable:
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        vals = [r.get(name, np.nan) for r in self.rows]
        return np.array([v if isinstance(v, (int, float)) else np.nan for v in vals], dtype=float)

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter=",", lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(row.get(c, "")) for c in self.columns])
        return path

    @classmethod
    def read_csv(cls, path) -> "ConvergenceTable":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            columns = next(reader)
            rows = [{c: _parse(v) for c, v in zip(columns, line)} for line in reader]
        return cls(columns, rows)


def _w1_col(t: float) -> str:
    return f"w1_t{t:g}"


def _timed_columns(cfg: ExperimentConfig, cols: list[str]) -> list[str]:
    # wall time breaks byte-identical output, so it is dropped in deterministic mode
    return cols if cfg.deterministic else cols + ["wall_time"]


def run_value_convergence(cfg: ExperimentConfig) -> ConvergenceTable:
    """Entropic value and its gap to the optimal transport cost of (mu0, mu1^k) per k."""
    start = time.perf_counter()
    rep = anneal(cfg.mu0, cfg.mu1, cfg.cost_matrix(), cfg.target_reference, cfg.schedule,
                 cfg.tol, cfg.max_iter, oracle=True, warm_start=cfg.warm_start)
    table = ConvergenceTable(_timed_columns(cfg, ["k", "value", "transport_value", "gap",
                                                 "iterations", "converged", "error"]))
    for row in rep.rows:
        table.rows.append({"k": row.k, "value": row.value, "transport_value": row.transport_value,
                           "gap": row.gap, "iterations": row.iterations,
                           "converged": row.converged, "error": row.error,
                           "wall_time": time.perf_counter() - start})
    gaps = table.column("gap")
    finite = gaps[np.isfinite(gaps)]
    table.meta.update(oracle_value=rep.oracle_value, mode=_mode(cfg),
                      gap_decreasing=bool(len(finite) > 1 and np.all(np.diff(finite) < 0)))
    table.meta["anneal"] = rep
    return table


def _mode(cfg: ExperimentConfig) -> str:
    return "sequential (warm start)" if cfg.warm_start else "independent per k"


def run_plan_convergence(cfg: ExperimentConfig) -> ConvergenceTable:
    """Total variation between the entropic plan and the unique oracle plan per k."""
    start = time.perf_counter()
    rep = anneal(cfg.mu0, cfg.mu1, cfg.cost_matrix(), cfg.target_reference, cfg.schedule,
                 cfg.tol, cfg.max_iter, oracle=True, warm_start=cfg.warm_start)
    table = ConvergenceTable(_timed_columns(cfg, ["k", "tv", "iterations", "converged", "error"]))
    for row in rep.rows:
        table.rows.append({"k": row.k, "tv": row.tv if rep.oracle_unique else "n/a",
                           "iterations": row.iterations, "converged": row.converged,
                           "error": row.error, "wall_time": time.perf_counter() - start})
    tv = table.column("tv") if rep.oracle_unique else np.array([])
    table.meta.update(tv_applicable=rep.oracle_unique, mode=_mode(cfg),
                      decreasing=None if len(tv) < 2 else bool(tv[-1] <= tv[0]))
    table.meta["anneal"] = rep
    return table


def write_flow_csv(path, flow: DiscreteMeasure, t: float) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "grid_point", "density_weight"])
        for x, wt in zip(flow.points[:, 0], flow.weights):
            w.writerow([_fmt(float(t)), _fmt(float(x)), _fmt(float(wt))])
    return path


def run_interpolation(cfg: ExperimentConfig, flow_dir=None) -> ConvergenceTable:
    """W1 between the bridge-mixture flow of the entropic plan and the displacement interpolation.

    Also reports the plan TV and the slack ``tv * diameter`` of the interpolated atoms,
    which bounds the part of W1 due to the plan (rather than the bridges) differing.
    """
    if cfg.mu0.dim != 1:
        raise ConfigError("interpolation experiments need one-dimensional measures")
    start = time.perf_counter()
    cmat = cfg.cost_matrix()
    rep = anneal(cfg.mu0, cfg.mu1, cmat, cfg.target_reference, cfg.schedule,
                 cfg.tol, cfg.max_iter, oracle=True, warm_start=cfg.warm_start)
    cols = ["k", "tv"] + [_w1_col(t) for t in cfg.times] + ["iterations", "error"]
    table = ConvergenceTable(_timed_columns(cfg, cols))
    oracle_cache: dict[bytes, Any] = {}
    for row in rep.rows:
        rec: dict[str, Any] = {"k": row.k, "tv": row.tv, "iterations": row.iterations,
                               "error": row.error}
        if row.report is not None:
            key = row.target.weights.tobytes()
            if key not in oracle_cache:
                oracle_cache[key] = lp_solve(cfg.mu0, row.target, cmat)
            plan = oracle_cache[key].plan
            k_int = int(round(row.k))
            for t in cfg.times:
                flow = mixture_flow(row.report.coupling, k_int, t)
                target = displacement_interpolation(plan, t)
                rec[_w1_col(t)] = wasserstein1_1d(flow, target)
                if flow_dir is not None:
                    write_flow_csv(Path(flow_dir) / f"flow_k{k_int}_t{t:g}.csv", flow, t)
        rec["wall_time"] = time.perf_counter() - start
        table.rows.append(rec)
    pts = np.concatenate([cfg.mu0.points[:, 0], cfg.mu1.points[:, 0]])
    table.meta.update(diameter=float(pts.max() - pts.min()), mode=_mode(cfg),
                      oracle_unique=rep.oracle_unique)
    table.meta["anneal"] = rep
    return table


def random_path(rng, x, velocity_sampler, knots: int) -> PiecewiseLinearPath:
    """Piecewise-linear path from x with random knot times and sampled segment velocities."""
    times = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, knots - 2)), [1.0]])
    vel = velocity_sampler(rng, (knots - 1, x.size))
    pts = x + np.vstack([np.zeros((1, x.size)), np.cumsum(vel * np.diff(times)[:, None], axis=0)])
    return PiecewiseLinearPath(times, pts)


def catalog_grids() -> dict[str, tuple]:
    """Interior evaluation grids (101 points) for the four catalog laws."""
    return {
        "normal": (StandardNormal(), np.linspace(-5.0, 5.0, 101)),
        "rademacher": (Rademacher(), np.linspace(-0.995, 0.995, 101)),
        "exponential1": (Exponential1(), np.linspace(0.02, 8.0, 101)),
        "poisson1": (Poisson1(), np.linspace(0.02, 8.0, 101)),
    }


def suite_actions() -> dict[str, ActionFunctional]:
    afs = {"kinetic": kinetic(1)}
    for name, (law, _) in catalog_grids().items():
        afs[f"mogulskii_{name}"] = ActionFunctional(CramerTransform(law))
    for p in (1.5, 2.0, 3.0):
        afs[f"power_{p:g}"] = twisted_walk(CramerTransform(StandardNormal()), power_twist(p))
    return afs


def velocity_sampler(name: str):
    """Velocities inside the effective domain of each suite action."""
    if name == "mogulskii_rademacher":
        return lambda rng, shape: rng.uniform(-0.99, 0.99, shape)
    if name in ("mogulskii_exponential1", "mogulskii_poisson1"):
        return lambda rng, shape: rng.uniform(0.05, 3.0, shape)
    return lambda rng, shape: rng.normal(scale=1.5, size=shape)


def run_cost_suite(n_paths: int = 100, seed: int = 0) -> dict:
    """Closed-form vs numerical Cramer agreement and path/static-cost consistency tables."""
    cramer_rows = []
    for name, (law, grid) in catalog_grids().items():
        closed = CramerTransform(law).evaluate(grid)
        numeric = CramerTransform(law, "numerical").evaluate(grid)
        cramer_rows.append({"law": name, "points": grid.size,
                            "max_abs_err": float(np.max(np.abs(closed - numeric)))})
    rad_num = CramerTransform(Rademacher(), "numerical")
    rad_closed = CramerTransform(Rademacher())
    cramer_rows.append({"law": "rademacher_boundary", "points": 2,
                        "max_abs_err": max(abs(rad_num(s) - math.log(2.0)) for s in (-1.0, 1.0))})

    rng = np.random.default_rng(seed)
    geo_rows = []
    for name, af in suite_actions().items():
        min_slack = np.inf
        geo_resid = 0.0
        twist_resid = 0.0
        for _ in range(n_paths):
            x = rng.uniform(-1, 1, 1)
            omega = random_path(rng, x, velocity_sampler(name), int(rng.integers(2, 12)))
            y = omega.end
            sc = static_cost(af, x, y)
            act = action(af, omega)
            if np.isfinite(act):
                min_slack = min(min_slack, act - sc)
            g = geodesic(af, x, y)
            geo_resid = max(geo_resid, abs(action(af, g.path) - g.cost))
            if af.twist is not None:
                twist_resid = max(twist_resid, abs(g.cost - af.transform(af.twist.beta(y - x))))
        geo_rows.append({"action": name, "paths": n_paths, "min_slack": float(min_slack),
                         "geodesic_residual": geo_resid, "twist_residual": twist_resid})

    v = np.array([0.7])
    p2 = twisted_walk(CramerTransform(StandardNormal()), power_twist(2.0))
    ratio = static_cost(p2, [0.0], v) / static_cost(kinetic(1), [0.0], v)
    outside = {
        "closed": rad_closed(3.0),
        "numerical": rad_num(3.0),
        "static": static_cost(ActionFunctional(rad_closed), [0.0], [3.0]),
    }
    return {"cramer": cramer_rows, "geodesic": geo_rows, "power2_kinetic_ratio": ratio,
            "rademacher_outside": outside}


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        return str(o)

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
    return path


def table_payload(table: ConvergenceTable) -> dict:
    meta = {k: v for k, v in table.meta.items() if k != "anneal"}
    return {"columns": table.columns, "rows": table.rows, "meta": meta}


__all__ = [
    "ConfigError", "ConvergenceTable", "ExperimentConfig", "InfeasibleError", "canonical_config",
    "config_from_dict", "load_config", "run_cost_suite", "run_interpolation",
    "run_plan_convergence", "run_value_convergence", "write_flow_csv", "write_json",
]
