import json

import pandas as pd
import pytest
import yaml

from cli.commands import cmd_list, cmd_solve, cmd_verify
from main import build_parser, main, overrides_from_args
from utils.config import Config


def _overrides(out_dir, **extra):
    overrides = {"output.folder": str(out_dir), "runtime.memory_check": False}
    overrides.update(extra)
    return overrides


# ---------------------------------------------------------------- list

def test_list_marks_tree_only_cases(capsys):
    assert cmd_list() == 0
    lines = dict(line.split("\t", 1) for line in capsys.readouterr().out.strip().splitlines())
    assert lines["mart"].startswith("closed-form")
    assert lines["linear-bsde"].startswith("closed-form")
    assert lines["zeta-coupled"].startswith("tree-oracle-only")
    assert lines["adapted-only"].endswith("adapted")


# ---------------------------------------------------------------- solve

def test_solve_det_writes_surfaces(tmp_path):
    code = cmd_solve(Config(), _overrides(tmp_path, **{"problem.case": "det", "solver.estimator": "exact"}))
    assert code == 0
    y = pd.read_csv(tmp_path / "y_surface.csv")
    assert list(y.columns) == ["t", "component", "mean_Y", "lp_moment_Y", "q0.05", "q0.5", "q0.95"]
    assert y["mean_Y"].tolist() == pytest.approx((1.0 + y["t"]).tolist(), abs=1e-12)
    z = pd.read_csv(tmp_path / "z_surface.csv")
    assert list(z.columns) == ["t_i", "t_j", "l2_mean_Z"]
    assert len(z) == 9 * 8

    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["exit_code"] == 0
    assert report["converged"] is True
    assert report["plan"]["boundaries"] == [8, 0]
    assert [n["kind"] for n in report["norms"]] == ["H^p", "M^p"]
    assert report["residuals"]["equation"] < 1e-10
    assert report["timing"] is None


def test_solve_adapted_writes_upper_triangle(tmp_path):
    code = cmd_solve(Config(), _overrides(tmp_path, **{"problem.case": "adapted-only", "solver.estimator": "exact",
                                                       "ensemble.grid": 4, "solver.tol": 1e-10}))
    assert code == 0
    assert len(pd.read_csv(tmp_path / "z_surface.csv")) == 4 * 5 // 2
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["residuals"]["m_identity"] is None
    assert report["norms"][0]["kind"] == "H_0^p"


def test_solve_rejects_bad_exponent(tmp_path, capsys):
    code = cmd_solve(Config(), _overrides(tmp_path, **{"problem.case": "linear-bsde", "problem.p": 0.5}))
    assert code == 1
    assert "E202" in capsys.readouterr().err


def test_solve_reports_non_convergence(tmp_path):
    overrides = _overrides(tmp_path, **{"problem.case": "linear-bsde", "solver.estimator": "exact",
                                        "solver.tol": 1e-300, "solver.max_iter": 1})
    assert cmd_solve(Config(), overrides) == 2
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["exit_code"] == 2
    assert report["converged"] is False
    assert all(s["iterations"] == 1 for s in report["subintervals"])


def test_solve_timing_is_optional(tmp_path):
    overrides = _overrides(tmp_path, **{"problem.case": "mart", "solver.estimator": "exact", "ensemble.grid": 3,
                                        "output.include_timing": True, "output.per_path_dump": True})
    assert cmd_solve(Config(), overrides) == 0
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["timing"]["wall_seconds"] >= 0.0
    paths = pd.read_csv(tmp_path / "y_paths.csv")
    assert len(paths) == 8
    assert list(paths.columns) == ["path", "component", "t0", "t1", "t2", "t3"]


def test_outputs_independent_of_worker_count(tmp_path):
    outputs = []
    for workers in (1, 4):
        out_dir = tmp_path / f"w{workers}"
        overrides = _overrides(out_dir, **{"problem.case": "linear-bsde", "ensemble.paths": 2000,
                                           "ensemble.grid": 4, "ensemble.seed": 5, "runtime.workers": workers})
        assert cmd_solve(Config(), overrides) == 0
        outputs.append({name: (out_dir / name).read_bytes()
                        for name in ("y_surface.csv", "z_surface.csv", "report.json")})
    assert outputs[0] == outputs[1]


# ---------------------------------------------------------------- verify

def test_verify_zeta_coupled_against_tree(tmp_path):
    overrides = _overrides(tmp_path, **{"solver.estimator": "exact", "solver.tol": 1e-12})
    assert cmd_verify("zeta-coupled", Config(), overrides) == 0
    report = json.loads((tmp_path / "verify_report.json").read_text(encoding="utf-8"))
    assert report["reference"] == "tree"
    assert report["metric"] == "max_abs"
    assert [b["block"] for b in report["blocks"]] == ["Y", "Z_upper", "Z_lower"]
    assert all(b["max_abs"] <= 1e-9 for b in report["blocks"])


def test_verify_mart_is_exact(tmp_path):
    overrides = _overrides(tmp_path, **{"solver.estimator": "exact", "solver.tol": 1e-12})
    assert cmd_verify("mart", Config(), overrides) == 0
    report = json.loads((tmp_path / "verify_report.json").read_text(encoding="utf-8"))
    assert max(b["max_abs"] for b in report["blocks"]) < 1e-10


@pytest.mark.slow
def test_verify_regression_against_closed_form(tmp_path):
    overrides = _overrides(tmp_path, **{"ensemble.paths": 10000, "ensemble.seed": 3})
    assert cmd_verify("linear-bsde", Config(), overrides) == 0
    report = json.loads((tmp_path / "verify_report.json").read_text(encoding="utf-8"))
    assert report["reference"] == "closed-form"
    assert report["metric"] == "relative_l2"


def test_verify_without_closed_form_needs_exact(tmp_path, capsys):
    overrides = _overrides(tmp_path, **{"ensemble.paths": 200})
    assert cmd_verify("zeta-coupled", Config(), overrides) == 1
    report = json.loads((tmp_path / "verify_report.json").read_text(encoding="utf-8"))
    assert "E602" in report["error"]
    assert "E602" in capsys.readouterr().err


def test_verify_unknown_case(tmp_path):
    assert cmd_verify("nope", Config(), _overrides(tmp_path)) == 1


# ---------------------------------------------------------------- 入口

def test_parser_overrides():
    args = build_parser().parse_args(["solve", "--grid", "4", "--max-iter", "7", "--estimator", "exact"])
    assert overrides_from_args(args) == {"ensemble.grid": 4, "solver.max_iter": 7, "solver.estimator": "exact"}


def test_main_list():
    assert main(["list"]) == 0


def test_main_solve_with_yaml(tmp_path):
    config_path = tmp_path / "run.yaml"
    config_path.write_text(yaml.safe_dump({
        "problem": {"case": "linear-bsde"},
        "output": {"folder": str(tmp_path / "out")},
    }), encoding="utf-8")
    assert main(["solve", "--config", str(config_path), "--estimator", "exact", "--grid", "4"]) == 0
    assert (tmp_path / "out" / "report.json").exists()


def test_main_missing_config(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "absent.yaml")]) == 1
