"""
子命令实现: solve / verify / list

每个命令返回退出码：0 成功，2 未收敛，1 配置、校验或其他错误。
错误信息写到标准错误。
"""

import sys
import time
from pathlib import Path
from typing import Any, List, Mapping, Optional, Tuple

import numpy as np

from cli.report import (BlockDiscrepancy, TimingModel, VerifyReport, build_run_report, describe_ensemble,
                        write_json, write_surfaces)
from cli.run_config import RunConfig
from core.grid import build_grid
from core.problem import problem_to_mapping, validate_problem
from core.surfaces import PathEnsemble, SolutionSurface
from oracles.catalog import OracleCase, analytic_eval, get_case, oracle_catalog
from oracles.tree_solver import exact_tree_solve
from solver.drivers import solve
from stochastics.ensemble import build_ensemble
from stochastics.estimators import EstimatorFactory
from utils.config import Config
from utils.error_handler import BSVIEError, CatalogError, ErrorCode, exit_code_for, handle_exception
from utils.logger import get_logger


logger = get_logger("cli")


def _report_error(error: BaseException):
    if isinstance(error, BSVIEError):
        print(f"错误: {error.get_short_message()}", file=sys.stderr)
        for solution in error.get_solutions()[:3]:
            print(f"  - {solution}", file=sys.stderr)
    else:
        print(f"错误: {error}", file=sys.stderr)


def _build_inputs(run: RunConfig) -> Tuple[PathEnsemble, Any]:
    grid = build_grid(run.problem.horizon, run.steps)
    ensemble = build_ensemble(run.ensemble_kind, grid, run.problem.d, run.paths, run.seed, run.workers)
    estimator = EstimatorFactory.create(run.estimator)
    return ensemble, estimator


@handle_exception
def _run_solve(run: RunConfig) -> Tuple[SolutionSurface, PathEnsemble, Any]:
    ensemble, estimator = _build_inputs(run)
    surface = solve(run.problem, ensemble, estimator, run.tol, run.max_iter, run.solve_options())
    return surface, ensemble, estimator


def cmd_solve(config: Config, overrides: Optional[Mapping[str, Any]] = None) -> int:
    """
    求解并写出 y_surface.csv、z_surface.csv、report.json

    Returns:
        0 收敛，2 未收敛，1 配置或校验错误
    """
    try:
        run = RunConfig.from_config(config, overrides)
    except BSVIEError as e:
        _report_error(e)
        return exit_code_for(e)

    started = time.perf_counter()
    out_dir = run.output_dir
    problem = problem_to_mapping(run.problem)
    validation = validate_problem(run.problem)
    try:
        surface, ensemble, estimator = _run_solve(run)
    except BSVIEError as e:
        _report_error(e)
        code = exit_code_for(e)
        report = build_run_report(None, exit_code=code, estimator=run.estimator, ensemble=run.ensemble_kind,
                                  problem=problem, config=run.echo(), validation=validation,
                                  error=e.get_short_message())
        write_json(report, out_dir / "report.json")
        return code

    code = 0 if surface.converged else 2
    write_surfaces(surface, out_dir, run.problem.p, run.quantiles, per_path=run.per_path_dump)
    wall = time.perf_counter() - started if run.include_timing else None
    report = build_run_report(surface, exit_code=code, estimator=estimator.label,
                              ensemble=describe_ensemble(ensemble), problem=problem, config=run.echo(),
                              validation=validation, wall_seconds=wall)
    write_json(report, out_dir / "report.json")
    if code == 2:
        print(f"未收敛: 最大压缩因子 {surface.diagnostics.max_ratio:.3g}，详见 {out_dir / 'report.json'}",
              file=sys.stderr)
    return code


def _block_arrays(surface: SolutionSurface) -> List[Tuple[str, np.ndarray, np.ndarray]]:
    """(名称, 取值, 掩码)：Y、Z 上块，M-解另有 Z 下块"""
    N = surface.grid.steps
    i = np.arange(N + 1)[:, None]
    j = np.arange(N)[None, :]
    blocks = [
        ("Y", surface.y.values[:, :N + 1], np.ones(N + 1, dtype=bool)),
        ("Z_upper", surface.z.values, j >= i),
    ]
    if surface.z.has_m_block:
        blocks.append(("Z_lower", surface.z.values, j < i))
    return blocks


def compare_surfaces(solved: SolutionSurface, reference: SolutionSurface, threshold: float,
                     relative: bool) -> List[BlockDiscrepancy]:
    """
    逐块比较两个曲面

    relative=True 时按 rms(差) / (1 + rms(参考)) 判定，否则按最大绝对差判定
    """
    results = []
    for (name, values, mask), (_, ref_values, _) in zip(_block_arrays(solved), _block_arrays(reference)):
        if not np.any(mask):
            continue
        diff = np.abs(values[:, mask] - ref_values[:, mask])
        rms_diff = float(np.sqrt(np.mean(diff ** 2)))
        rms_ref = float(np.sqrt(np.mean(ref_values[:, mask] ** 2)))
        rel = rms_diff / (1.0 + rms_ref)
        max_abs = float(np.max(diff))
        passed = (rel if relative else max_abs) <= threshold
        results.append(BlockDiscrepancy(block=name, max_abs=max_abs, mean_abs=float(np.mean(diff)),
                                        relative_l2=rel, threshold=threshold, passed=passed))
    return results


@handle_exception
def _reference_surface(case: OracleCase, run: RunConfig, ensemble: PathEnsemble) -> Tuple[SolutionSurface, str]:
    if run.estimator == "exact":
        tree = exact_tree_solve(run.problem, ensemble, tol=run.tol / 10.0, max_iter=max(run.max_iter, 200))
        return tree, "tree"
    if not case.has_closed_form:
        raise CatalogError(f"用例 '{case.name}' 没有解析解，回归估计下无法验证；请使用 --estimator exact",
                           ErrorCode.NO_CLOSED_FORM)
    return analytic_eval(case, ensemble), "closed-form"


def cmd_verify(case_name: str, config: Config, overrides: Optional[Mapping[str, Any]] = None) -> int:
    """
    在同一路径集上比较求解器与参考解，写出 verify_report.json

    exact 估计器以树求解为参考，要求最大绝对差 ≤ 用例倍数·tol（不低于 1e-9）；
    回归估计器以解析解为参考，按相对 L² 判定。

    Returns:
        0 通过，1 未通过或出错，2 参考解不收敛
    """
    try:
        case = get_case(case_name)
        run = RunConfig.from_config(config, overrides, problem=case.spec)
    except BSVIEError as e:
        _report_error(e)
        return exit_code_for(e)

    started = time.perf_counter()
    exact = run.estimator == "exact"
    threshold = max(case.tolerance.exact * run.tol, 1e-9) if exact else case.tolerance.regress
    report = VerifyReport(
        case=case.name, mode=run.problem.mode.value, estimator=run.estimator,
        reference="tree" if exact else "closed-form", tol=run.tol,
        metric="max_abs" if exact else "relative_l2",
    )
    try:
        surface, ensemble, _ = _run_solve(run)
        reference, report.reference = _reference_surface(case, run, ensemble)
        report.solver_converged = surface.converged
        report.blocks = compare_surfaces(surface, reference, threshold, relative=not exact)
        report.passed = surface.converged and all(b.passed for b in report.blocks)
        report.exit_code = 0 if report.passed else 1
    except BSVIEError as e:
        _report_error(e)
        report.error = e.get_short_message()
        report.exit_code = exit_code_for(e)

    if run.include_timing:
        report.timing = TimingModel(wall_seconds=time.perf_counter() - started)
    write_json(report, Path(run.output_dir) / "verify_report.json")
    for block in report.blocks:
        logger.info(f"[{case.name}] {block.block}: max {block.max_abs:.3e}, "
                    f"相对 L² {block.relative_l2:.3e}, {'通过' if block.passed else '未通过'}")
    if not report.passed and report.error is None:
        print(f"验证未通过: {case.name}", file=sys.stderr)
    return report.exit_code


def cmd_list() -> int:
    """列出目录中的用例及是否有解析解"""
    for case in oracle_catalog():
        kind = "closed-form" if case.has_closed_form else "tree-oracle-only"
        print(f"{case.name}\t{kind}\t{case.spec.mode.value}")
    return 0
