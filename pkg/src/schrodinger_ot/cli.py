"""Command-line entry point.

Exit codes: 0 success, 2 infeasible instance, 3 non-convergence, 4 config error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .cost_engine import cost_from_spec, cost_matrix
from .entropic import (DEFAULT_MAX_ITER, DEFAULT_TOL, InfeasibleError, anneal, build_kernel,
                       moving_constraint, on_support, sinkhorn)
from .harness import (ConfigError, ConvergenceTable, ExperimentConfig, canonical_config,
                      load_config, run_cost_suite, run_interpolation, run_plan_convergence,
                      run_value_convergence, write_json)
from .measures import DiscreteMeasure, load_measure
from .oracle import lp_solve

EXIT_OK, EXIT_INFEASIBLE, EXIT_UNCONVERGED, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("schrodinger_ot")


class Unconverged(RuntimeError):
    pass


def _load_spec(text: str) -> dict:
    p = Path(text)
    if p.suffix == ".json" and p.exists():
        with open(p, encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(text)


def _points(text: str) -> np.ndarray:
    p = Path(text)
    if p.exists():
        return load_measure(p).points
    pts = np.asarray(json.loads(text), dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def _out_path(args, name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(args.out_dir or ".") / name


def _config_or_flags(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif getattr(args, "mu0", None) and getattr(args, "mu1", None) and getattr(args, "cost", None):
        mu0, mu1 = load_measure(args.mu0), load_measure(args.mu1)
        cfg = ExperimentConfig(mu0=mu0, mu1=mu1, cost=cost_from_spec(_load_spec(args.cost), mu0.dim))
    else:
        cfg = canonical_config()
    if args.deterministic:
        cfg.deterministic = True
    if getattr(args, "schedule", None):
        cfg.schedule = tuple(float(s) for s in args.schedule.split(",") if s.strip())
        cfg.__post_init__()
    if args.out_dir:
        cfg.out_dir = Path(args.out_dir)
    return cfg


def cmd_cost(args) -> int:
    dim_src = _points(args.src)
    cf = cost_from_spec(_load_spec(args.cost), dim_src.shape[1])
    c = cost_matrix(cf, dim_src, _points(args.tgt))
    lines = [",".join(repr(float(x)) for x in row) for row in c]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(args) -> int:
    mu0, mu1 = load_measure(args.mu0), load_measure(args.mu1)
    ref = DiscreteMeasure.uniform(mu1.points) if args.ref == "uniform" else load_measure(args.ref)
    cf = cost_from_spec(_load_spec(args.cost), mu0.dim)
    kernel = build_kernel(mu0, ref, cost_matrix(cf, mu0.points, ref.points), args.k)
    target = moving_constraint(mu1, kernel) if args.moving else on_support(mu1, ref.points)
    rep = sinkhorn(kernel, target, tol=args.tol, max_iter=args.max_iter)
    write_json(_out_path(args, "report.json"), rep.to_dict())
    if not rep.converged:
        raise Unconverged(f"IPFP stopped at marginal error {rep.marginal_error:.3g}")
    return EXIT_OK


def cmd_anneal(args) -> int:
    cfg = _config_or_flags(args)
    if getattr(args, "ref", "uniform") not in (None, "uniform"):
        cfg.reference = load_measure(args.ref)
    cfg.tol, cfg.max_iter = args.tol, args.max_iter
    rep = anneal(cfg.mu0, cfg.mu1, cfg.cost_matrix(), cfg.target_reference, cfg.schedule,
                 cfg.tol, cfg.max_iter, oracle=args.oracle == "on", warm_start=cfg.warm_start)
    table = ConvergenceTable(["k", "value", "gap", "tv", "iters"])
    for row in rep.rows:
        table.rows.append({"k": row.k, "value": row.value, "gap": row.gap, "tv": row.tv,
                           "iters": row.iterations})
    out = _out_path(args, "anneal.csv")
    table.write_csv(out)
    log.info("mode: %s; wrote %s", "sequential (warm start)", out)
    if any(r.error.startswith("infeasible") for r in rep.rows):
        raise InfeasibleError("; ".join(r.error for r in rep.rows if r.error))
    if any(r.error == "unconverged" for r in rep.rows):
        raise Unconverged("at least one k did not converge")
    return EXIT_OK


def cmd_oracle(args) -> int:
    mu0, mu1 = load_measure(args.mu0), load_measure(args.mu1)
    cf = cost_from_spec(_load_spec(args.cost), mu0.dim)
    res = lp_solve(mu0, mu1, cost_matrix(cf, mu0.points, mu1.points))
    write_json(_out_path(args, "oracle.json"), res.to_dict())
    if not np.isfinite(res.value):
        raise InfeasibleError("no finite-cost transport plan")
    return EXIT_OK


def cmd_interpolate(args) -> int:
    cfg = _config_or_flags(args)
    out_dir = Path(cfg.out_dir or ".")
    table = run_interpolation(cfg, flow_dir=out_dir / "flows")
    table.write_csv(out_dir / "interpolation.csv")
    return EXIT_OK


def _suite_lines(cfg: ExperimentConfig, out_dir: Path) -> list[tuple[str, bool, str]]:
    results = []
    costs = run_cost_suite()
    write_json(out_dir / "cost_suite.json", costs)
    worst = max(r["max_abs_err"] for r in costs["cramer"])
    results.append(("cramer catalog agreement", worst <= 1e-6, f"max err {worst:.2e}"))
    slack = min(r["min_slack"] for r in costs["geodesic"])
    resid = max(max(r["geodesic_residual"], r["twist_residual"]) for r in costs["geodesic"])
    results.append(("geodesic/static cost consistency", slack >= -1e-9 and resid <= 1e-6,
                    f"min slack {slack:.2e}, residual {resid:.2e}"))

    val = run_value_convergence(cfg)
    val.write_csv(out_dir / "value_convergence.csv")
    gaps = val.column("gap")
    ok = bool(np.all(np.diff(gaps) < 0) and gaps[-1] <= 0.01)
    results.append(("value convergence", ok, f"final gap {gaps[-1]:.2e}"))

    plan = run_plan_convergence(cfg)
    plan.write_csv(out_dir / "plan_convergence.csv")
    tv = plan.column("tv")
    ok = bool(plan.meta["tv_applicable"] and tv[-1] <= 0.05 and tv[-1] <= tv[0])
    results.append(("plan convergence", ok, f"final tv {tv[-1]:.2e}"))

    interp_cfg = ExperimentConfig(**{**cfg.__dict__, "schedule": (4, 16, 64, 256), "times": (0.5,)})
    interp = run_interpolation(interp_cfg, flow_dir=out_dir / "flows")
    interp.write_csv(out_dir / "interpolation.csv")
    w1 = interp.column("w1_t0.5")
    ks = interp.column("k")
    bound = 2 * np.sqrt(1 / (4 * ks)) + interp.column("tv") * interp.meta["diameter"]
    ok = bool(np.all(np.diff(w1) < 0) and np.all(w1 <= bound))
    results.append(("interpolation convergence", ok, f"w1 {np.array2string(w1, precision=4)}"))
    return results


def cmd_suite(args) -> int:
    cfg = _config_or_flags(args)
    out_dir = Path(cfg.out_dir or "suite_out")
    results = _suite_lines(cfg, out_dir)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    write_json(out_dir / "suite.json", [{"name": n, "pass": ok, "detail": d} for n, ok, d in results])
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_UNCONVERGED


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommand copies must not overwrite values given before the subcommand
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--config", help="experiment config (JSON)", **kw)
        g.add_argument("--deterministic", action="store_true",
                       help="drop wall-clock columns so repeated runs are byte-identical", **kw)
        g.add_argument("--out-dir", help="directory for emitted files", **kw)
        return g

    common = global_flags(True)
    parser = argparse.ArgumentParser(prog="schrodinger-ot", parents=[global_flags(False)],
                                     description="Entropic transport along a zero-noise schedule.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cost", parents=[common], help="evaluate a cost spec between point sets")
    p.add_argument("--cost", required=True, help="cost spec as JSON text or a .json file")
    p.add_argument("--src", required=True, help="JSON list of points or a measure file")
    p.add_argument("--tgt", required=True, help="JSON list of points or a measure file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost)

    def add_problem(p, required=True):
        p.add_argument("--mu0", required=required)
        p.add_argument("--mu1", required=required)
        p.add_argument("--cost", required=required)

    p = sub.add_parser("solve", parents=[common], help="solve one entropic problem")
    add_problem(p)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--ref", default="uniform", help="'uniform' or a measure file")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--moving", action="store_true", help="project mu1 onto reachable targets")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("anneal", parents=[common], help="solve along a k schedule")
    add_problem(p, required=False)
    p.add_argument("--ref", default="uniform")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--schedule", help="comma-separated increasing k values")
    p.add_argument("--oracle", choices=("on", "off"), default="on")
    p.add_argument("--out")
    p.set_defaults(func=cmd_anneal)

    p = sub.add_parser("oracle", parents=[common], help="exact optimal transport plan")
    add_problem(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("interpolate", parents=[common], help="bridge-mixture flows vs interpolation")
    add_problem(p, required=False)
    p.add_argument("--schedule")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("suite", parents=[common], help="run the convergence experiments")
    add_problem(p, required=False)
    p.add_argument("--schedule")
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        log.error("infeasible: %s", exc)
        return EXIT_INFEASIBLE
    except Unconverged as exc:
        log.error("not converged: %s", exc)
        return EXIT_UNCONVERGED
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
