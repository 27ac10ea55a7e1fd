import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from schrodinger_ot import DiscreteMeasure, build_kernel, cost_from_spec, marginal
from schrodinger_ot.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, EXIT_UNCONVERGED, main
from schrodinger_ot.harness import (ConfigError, ConvergenceTable, canonical_config,
                                    config_from_dict, load_config, run_cost_suite, run_interpolation,
                                    run_plan_convergence, run_value_convergence)


def same_cell(a, b):
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a):
        return math.isnan(b)
    return a == b


def write_measure(path, points, weights):
    path.write_text(json.dumps(DiscreteMeasure(points, weights).to_dict()))
    return str(path)


@pytest.fixture
def files(tmp_path):
    mu0 = write_measure(tmp_path / "mu0.json", [0.0, 1.0], [0.5, 0.5])
    mu1 = write_measure(tmp_path / "mu1.json", [2.0, 3.0], [0.5, 0.5])
    return tmp_path, mu0, mu1


class TestConfig:
    def test_relative_paths(self, files):
        tmp, _, _ = files
        sub = tmp / "cfg"
        sub.mkdir()
        (tmp / "costs.csv").write_text("2,4.5\n0.5,2\n")
        (sub / "run.json").write_text(json.dumps({
            "mu0": "../mu0.json", "mu1": "../mu1.json",
            "cost": {"kind": "table", "path": "../costs.csv"},
            "schedule": "4,16", "out_dir": "out", "times": [0.5],
        }))
        cfg = load_config(sub / "run.json")
        assert cfg.schedule == (4.0, 16.0)
        assert cfg.out_dir == sub / "out"
        np.testing.assert_array_equal(cfg.cost_matrix(), [[2, 4.5], [0.5, 2]])

    def test_inline_measures(self):
        cfg = config_from_dict({"mu0": {"points": [[0.0]], "weights": [1.0]},
                                "mu1": {"points": [[1.0]], "weights": [1.0]},
                                "cost": {"kind": "power", "p": 2}})
        assert cfg.mu0.dim == 1 and cfg.schedule[-1] == 4096

    @pytest.mark.parametrize("bad", [
        {"schedule": [16, 4]},
        {"schedule": []},
        {"times": [1.5]},
        {"cost": {"kind": "nope"}},
        {"mu0": "missing.json"},
    ])
    def test_invalid(self, bad, tmp_path):
        data = {"mu0": {"points": [[0.0]], "weights": [1.0]},
                "mu1": {"points": [[1.0]], "weights": [1.0]},
                "cost": {"kind": "power", "p": 2}}
        data.update(bad)
        with pytest.raises(ConfigError):
            config_from_dict(data, tmp_path)

    def test_unreadable(self, tmp_path):
        (tmp_path / "broken.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "broken.json")

    def test_perturbation_is_seeded(self):
        a = canonical_config(perturbation=1e-7, seed=3).cost_matrix()
        b = canonical_config(perturbation=1e-7, seed=3).cost_matrix()
        c = canonical_config(perturbation=1e-7, seed=4).cost_matrix()
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert np.abs(a - canonical_config().cost_matrix()).max() <= 1e-7


class TestTables:
    def test_csv_roundtrip(self, tmp_path):
        table = run_value_convergence(canonical_config(schedule=(4, 16, 64)))
        table.write_csv(tmp_path / "v.csv")
        back = ConvergenceTable.read_csv(tmp_path / "v.csv")
        assert back.columns == table.columns
        for a, b in zip(table.rows, back.rows):
            for col in table.columns:
                assert same_cell(a[col], b[col]), col

    def test_roundtrip_special_values(self, tmp_path):
        table = ConvergenceTable(["k", "tv", "error"], [
            {"k": 4.0, "tv": "n/a", "error": ""},
            {"k": 16.0, "tv": float("inf"), "error": "unconverged"},
            {"k": 64.0, "tv": float("nan"), "error": ""},
            {"k": 256.0, "tv": 0.1 + 0.2, "error": ""},
        ])
        table.write_csv(tmp_path / "t.csv")
        back = ConvergenceTable.read_csv(tmp_path / "t.csv")
        for a, b in zip(table.rows, back.rows):
            for col in table.columns:
                assert same_cell(a[col], b[col])

    def test_deterministic_csv_identical(self, tmp_path):
        outs = []
        for run in ("a", "b"):
            cfg = canonical_config(schedule=(4, 16, 64), deterministic=True)
            run_value_convergence(cfg).write_csv(tmp_path / run / "v.csv")
            outs.append((tmp_path / run / "v.csv").read_bytes())
        assert outs[0] == outs[1]
        assert b"wall_time" not in outs[0]

    def test_wall_time_when_not_deterministic(self):
        assert "wall_time" in run_value_convergence(canonical_config(schedule=(4,))).columns


class TestExperiments:
    def test_value_convergence(self):
        table = run_value_convergence(canonical_config())
        gaps = table.column("gap")
        assert len(table.rows) == 6
        assert table.meta["gap_decreasing"] and gaps[-1] <= 0.01
        assert table.meta["oracle_value"] == pytest.approx(2.0)

    def test_value_kernel_marginal(self):
        cfg = canonical_config(schedule=(4, 16, 64))
        r = cfg.target_reference
        # one fixed kernel marginal: at every k the gap is bounded by the entropic bias
        mu1 = marginal(build_kernel(cfg.mu0, r, cfg.cost_matrix(), 4).joint(), "target")
        table = run_value_convergence(canonical_config(schedule=(4, 16, 64), mu1=mu1))
        for k, gap in zip(table.column("k"), table.column("gap")):
            assert -1e-9 <= gap <= math.log(4) / k + 1e-9
        assert table.rows[0]["value"] == pytest.approx(0.0, abs=1e-12)

    def test_value_infeasible_rows(self, tmp_path):
        (tmp_path / "c.csv").write_text("inf,inf\n0,1\n")
        cfg = canonical_config(schedule=(4, 16),
                               cost=config_from_dict({"mu0": {"points": [[0]], "weights": [1]},
                                                      "mu1": {"points": [[0]], "weights": [1]},
                                                      "cost": {"kind": "table", "path": "c.csv"}},
                                                     tmp_path).cost)
        table = run_value_convergence(cfg)
        assert len(table.rows) == 2
        assert all(r["error"].startswith("infeasible") for r in table.rows)

    def test_plan_convergence(self):
        table = run_plan_convergence(canonical_config())
        tv = table.column("tv")
        assert table.meta["tv_applicable"]
        assert tv[-1] <= 0.05 and tv[-1] <= tv[0]

    def test_plan_identity(self, rng):
        mu = DiscreteMeasure(np.arange(4.0), rng.dirichlet(np.ones(4)))
        table = run_plan_convergence(canonical_config(mu0=mu, mu1=mu, schedule=(4, 64, 1024)))
        tv = table.column("tv")
        assert tv[-1] < tv[0] and tv[-1] < 1e-3

    def test_plan_single_row(self):
        table = run_plan_convergence(canonical_config(schedule=(1,)))
        assert len(table.rows) == 1 and table.meta["decreasing"] is None

    def test_plan_non_unique_marked(self):
        # under |y - x| both matchings cost 2, so the optimal plan is not unique
        mu0 = DiscreteMeasure.uniform([0.0, 1.0])
        mu1 = DiscreteMeasure.uniform([2.0, 3.0])
        cfg = canonical_config(mu0=mu0, mu1=mu1, cost=cost_from_spec({"kind": "power", "p": 1.0}),
                               schedule=(4, 16))
        table = run_plan_convergence(cfg)
        assert not table.meta["tv_applicable"]
        assert all(r["tv"] == "n/a" for r in table.rows)

    def test_interpolation(self, tmp_path):
        cfg = canonical_config(schedule=(4, 16, 64, 256), times=(0.0, 0.5, 1.0))
        table = run_interpolation(cfg, flow_dir=tmp_path)
        w_half = table.column("w1_t0.5")
        assert np.all(np.diff(w_half) < 0)
        for col in ("w1_t0", "w1_t1"):
            assert np.all(table.column(col) <= table.column("tv") * table.meta["diameter"] + 1e-9)
        with open(tmp_path / "flow_k16_t0.5.csv", newline="") as fh:
            header = next(csv.reader(fh))
        assert header == ["t", "grid_point", "density_weight"]

    def test_interpolation_single_atom(self):
        cfg = canonical_config(mu0=DiscreteMeasure.dirac([0.0]), mu1=DiscreteMeasure.dirac([1.0]),
                               schedule=(4, 16, 64), times=(0.25, 0.5))
        table = run_interpolation(cfg)
        for t in (0.25, 0.5):
            for k, w in zip(table.column("k"), table.column(f"w1_t{t:g}")):
                assert w <= 2 * math.sqrt(t * (1 - t) / k)

    def test_interpolation_rejects_2d(self):
        mu = DiscreteMeasure.dirac([0.0, 0.0])
        cfg = canonical_config(mu0=mu, mu1=mu, cost=cost_from_spec({"kind": "power", "p": 2}, 2))
        with pytest.raises(ConfigError):
            run_interpolation(cfg)

    def test_cost_suite(self):
        rep = run_cost_suite()
        assert max(r["max_abs_err"] for r in rep["cramer"]) <= 1e-6
        assert all(r["points"] >= 100 for r in rep["cramer"] if r["law"] != "rademacher_boundary")
        assert min(r["min_slack"] for r in rep["geodesic"]) >= -1e-9
        assert rep["power2_kinetic_ratio"] == pytest.approx(2.0, abs=1e-14)
        assert all(v == math.inf for v in rep["rademacher_outside"].values())


class TestCLI:
    def test_cost(self, capsys):
        code = main(["cost", "--cost", '{"kind": "power", "p": 2, "scale": 0.5}',
                     "--src", "[0, 1]", "--tgt", "[2, 3]"])
        assert code == EXIT_OK
        assert capsys.readouterr().out.split() == ["2.0,4.5", "0.5,2.0"]

    def test_cost_inf(self, capsys):
        main(["cost", "--cost", '{"kind": "cramer", "law": "rademacher"}', "--src", "[0]", "--tgt", "[3]"])
        assert capsys.readouterr().out.strip() == "inf"

    def test_solve(self, files):
        tmp, mu0, mu1 = files
        out = tmp / "report.json"
        code = main(["solve", "--mu0", mu0, "--mu1", mu1, "--cost", '{"kind": "power", "p": 2}',
                     "--k", "4", "--out", str(out)])
        assert code == EXIT_OK
        rep = json.loads(out.read_text())
        assert rep["converged"] and rep["marginal_error"] <= 1e-9

    def test_solve_unconverged(self, files):
        tmp, mu0, mu1 = files
        code = main(["solve", "--mu0", mu0, "--mu1", mu1, "--cost", '{"kind": "power", "p": 2}',
                     "--k", "64", "--max-iter", "1", "--tol", "1e-15", "--out", str(tmp / "r.json")])
        assert code == EXIT_UNCONVERGED

    def test_solve_infeasible(self, files):
        tmp, mu0, _ = files
        far = write_measure(tmp / "far.json", [5.0], [1.0])
        code = main(["solve", "--mu0", mu0, "--mu1", far, "--cost",
                     '{"kind": "cramer", "law": "rademacher"}', "--k", "4", "--out", str(tmp / "r.json")])
        assert code == EXIT_INFEASIBLE

    def test_solve_moving(self, files):
        tmp, _, _ = files
        src = write_measure(tmp / "src.json", [0.0], [1.0])
        tgt = write_measure(tmp / "tgt.json", [0.4], [1.0])
        ref = write_measure(tmp / "ref.json", np.linspace(-1, 1, 9), np.full(9, 1 / 9))
        args = ["solve", "--mu0", src, "--mu1", tgt, "--ref", ref, "--k", "4",
                "--cost", '{"kind": "walk", "law": "rademacher", "steps": 4}', "--out", str(tmp / "r.json")]
        assert main(args) == EXIT_CONFIG  # 0.4 is not on the reference support
        assert main(args + ["--moving"]) == EXIT_OK
        rep = json.loads((tmp / "r.json").read_text())
        col = np.array(rep["coupling"]["weights"]).sum(axis=0)
        assert col[np.argmax(col)] == pytest.approx(1.0)
        assert rep["coupling"]["target_support"][int(np.argmax(col))] == [0.5]

    def test_anneal_csv_header(self, tmp_path):
        code = main(["--deterministic", "--out-dir", str(tmp_path), "anneal", "--schedule", "4,16"])
        assert code == EXIT_OK
        with open(tmp_path / "anneal.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "value", "gap", "tv", "iters"]
        assert len(rows) == 3

    def test_anneal_bad_schedule(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "anneal", "--schedule", "16,4"]) == EXIT_CONFIG

    def test_oracle(self, files):
        tmp, mu0, mu1 = files
        code = main(["oracle", "--mu0", mu0, "--mu1", mu1, "--cost", '{"kind": "power", "p": 2, "scale": 0.5}',
                     "--out-dir", str(tmp)])
        assert code == EXIT_OK
        res = json.loads((tmp / "oracle.json").read_text())
        assert res["value"] == pytest.approx(2.0) and res["unique"]

    def test_oracle_infeasible(self, files):
        tmp, mu0, mu1 = files
        code = main(["oracle", "--mu0", mu0, "--mu1", mu1, "--cost", '{"kind": "cramer", "law": "rademacher"}',
                     "--out-dir", str(tmp)])
        assert code == EXIT_INFEASIBLE

    def test_interpolate(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "interpolate", "--schedule", "4,16"]) == EXIT_OK
        assert (tmp_path / "interpolation.csv").exists()
        assert (tmp_path / "flows" / "flow_k4_t0.5.csv").exists()

    def test_config_flag(self, files):
        tmp, _, _ = files
        (tmp / "cfg.json").write_text(json.dumps({"mu0": "mu0.json", "mu1": "mu1.json",
                                                  "cost": {"kind": "power", "p": 2}, "schedule": [4, 16]}))
        assert main(["--config", str(tmp / "cfg.json"), "--out-dir", str(tmp / "o"), "anneal"]) == EXIT_OK
        assert main(["anneal", "--config", str(tmp / "cfg.json"), "--out-dir", str(tmp / "o2")]) == EXIT_OK
        assert (tmp / "o2" / "anneal.csv").exists()

    def test_missing_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.json"), "anneal"]) == EXIT_CONFIG

    def test_deterministic_cli_identical(self, tmp_path):
        for run in ("a", "b"):
            assert main(["--deterministic", "--out-dir", str(tmp_path / run), "anneal",
                         "--schedule", "4,16,64"]) == EXIT_OK
        assert (tmp_path / "a" / "anneal.csv").read_bytes() == (tmp_path / "b" / "anneal.csv").read_bytes()

    def test_suite(self, tmp_path, capsys):
        code = main(["--deterministic", "--out-dir", str(tmp_path), "suite"])
        out = capsys.readouterr().out
        assert code == EXIT_OK, out
        assert out.count("PASS") == 5 and "FAIL" not in out
        assert json.loads((tmp_path / "suite.json").read_text())[0]["pass"]

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "schrodinger_ot", "cost", "--cost",
                               '{"kind": "power", "p": 1}', "--src", "[0]", "--tgt", "[2]"],
                              capture_output=True, text=True, check=False)
        assert proc.returncode == 0 and proc.stdout.strip() == "2.0"
