"""
运行报告与曲面输出
CSV 用 pandas 写出，JSON 报告用 pydantic 模型序列化
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from core.problem import ValidationReport
from core.surfaces import PathEnsemble, SolutionSurface
from utils.logger import get_logger


logger = get_logger("report")

SCHEMA_VERSION = "1.0"
FLOAT_FORMAT = "%.17g"


class PlanModel(BaseModel):
    boundaries: List[int]
    times: List[float]
    eta: float
    eta_rule: float
    kappa_target: float
    c_cal: float
    clamped: bool


class SubintervalModel(BaseModel):
    lower: int
    upper: int
    t_lower: float
    t_upper: float
    iterations: int
    converged: bool
    halvings: int
    distances: List[Optional[float]]
    ratios: List[Optional[float]]


class NormModel(BaseModel):
    kind: str
    value: float
    p: float
    y_part: float
    z_part: float
    samples: int


class ResidualModel(BaseModel):
    equation: Optional[float] = None
    m_identity: Optional[float] = None
    m_identity_relative_l2: Optional[float] = None


class CheckModel(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class TimingModel(BaseModel):
    wall_seconds: float


class RunReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    command: str = "solve"
    exit_code: int
    converged: bool
    mode: str
    estimator: str
    ensemble: str
    problem: Dict[str, Any]
    config: Dict[str, Any]
    validation: List[CheckModel] = []
    plan: Optional[PlanModel] = None
    subintervals: List[SubintervalModel] = []
    max_ratio: Optional[float] = None
    norms: List[NormModel] = []
    residuals: ResidualModel = ResidualModel()
    estimator_fallbacks: Dict[str, int] = {}
    error: Optional[str] = None
    timing: Optional[TimingModel] = None


class BlockDiscrepancy(BaseModel):
    block: str
    max_abs: float
    mean_abs: float
    relative_l2: float
    threshold: float
    passed: bool


class VerifyReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    command: str = "verify"
    case: str
    mode: str
    estimator: str
    reference: str
    tol: float
    metric: str
    blocks: List[BlockDiscrepancy] = []
    solver_converged: bool = False
    passed: bool = False
    exit_code: int = 1
    error: Optional[str] = None
    timing: Optional[TimingModel] = None


def _finite_or_none(values: Sequence[float]) -> List[Optional[float]]:
    return [float(v) if np.isfinite(v) else None for v in values]


def build_run_report(surface: Optional[SolutionSurface], *, exit_code: int, estimator: str, ensemble: str,
                     problem: Dict[str, Any], config: Dict[str, Any],
                     validation: Optional[ValidationReport] = None, error: Optional[str] = None,
                     wall_seconds: Optional[float] = None) -> RunReport:
    """把求解结果整理成报告模型；surface 为 None 时只含配置与错误"""
    report = RunReport(
        exit_code=exit_code, converged=bool(surface and surface.converged),
        mode=str(problem.get("mode", "")), estimator=estimator, ensemble=ensemble,
        problem=problem, config=config, error=error,
        timing=TimingModel(wall_seconds=wall_seconds) if wall_seconds is not None else None,
    )
    if validation is not None:
        report.validation = [CheckModel(name=c.name, passed=c.passed, detail=c.detail) for c in validation.checks]
    if surface is None:
        return report

    grid = surface.grid
    plan = surface.plan
    if plan is not None:
        report.plan = PlanModel(
            boundaries=list(plan.boundaries), times=plan.times(grid), eta=plan.eta,
            eta_rule=plan.eta_rule, kappa_target=plan.kappa_target, c_cal=plan.c_cal, clamped=plan.clamped,
        )
    diag = surface.diagnostics
    report.subintervals = [
        SubintervalModel(
            lower=r.lower, upper=r.upper, t_lower=grid.t(r.lower), t_upper=grid.t(r.upper),
            iterations=r.iterations, converged=r.converged, halvings=r.halvings,
            distances=_finite_or_none(r.distances), ratios=_finite_or_none(r.ratios),
        )
        for r in diag.subintervals
    ]
    report.max_ratio = _finite_or_none([diag.max_ratio])[0]
    report.norms = [
        NormModel(kind=n.kind.value, value=n.value, p=n.p, y_part=n.y_part, z_part=n.z_part, samples=n.samples)
        for n in diag.norms
    ]
    report.residuals = ResidualModel(
        equation=diag.equation_residual, m_identity=diag.m_identity_residual,
        m_identity_relative_l2=diag.m_identity_relative_l2,
    )
    report.estimator_fallbacks = {str(step): count for step, count in diag.estimator_fallbacks.items()}
    return report


def write_json(model: BaseModel, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"报告已写出: {path}")


def quantile_column(q: float) -> str:
    return f"q{q:g}"


def y_surface_frame(surface: SolutionSurface, p: float, quantiles: Sequence[float]) -> pd.DataFrame:
    """每个 (t_i, 分量) 一行：均值、p 阶矩的 p 次根、分位数"""
    y = surface.y.values
    rows = []
    for i, t in enumerate(surface.grid.nodes):
        for k in range(y.shape[2]):
            values = y[:, i, k]
            row = {
                "t": float(t),
                "component": k,
                "mean_Y": float(np.mean(values)),
                "lp_moment_Y": float(np.mean(np.abs(values) ** p) ** (1.0 / p)),
            }
            for q, value in zip(quantiles, np.quantile(values, quantiles)):
                row[quantile_column(q)] = float(value)
            rows.append(row)
    return pd.DataFrame(rows)


def z_surface_frame(surface: SolutionSurface) -> pd.DataFrame:
    """模式允许区域内每个 (t_i, t_j) 一行：sqrt(E|Z_ij|²)"""
    z = surface.z.values
    region = surface.z.region_mask()
    nodes = surface.grid.nodes
    mean_sq = np.mean(np.sum(z ** 2, axis=(-2, -1)), axis=0)
    rows = [
        {"t_i": float(nodes[i]), "t_j": float(nodes[j]), "l2_mean_Z": float(np.sqrt(mean_sq[i, j]))}
        for i, j in zip(*np.nonzero(region))
    ]
    return pd.DataFrame(rows, columns=["t_i", "t_j", "l2_mean_Z"])


def y_paths_frame(surface: SolutionSurface) -> pd.DataFrame:
    """逐路径 Y：每条路径每个分量一行，列为网格节点"""
    y = surface.y.values
    M, n_nodes, m = y.shape
    data = y.transpose(0, 2, 1).reshape(M * m, n_nodes)
    frame = pd.DataFrame(data, columns=[f"t{i}" for i in range(n_nodes)])
    frame.insert(0, "component", np.tile(np.arange(m), M))
    frame.insert(0, "path", np.repeat(np.arange(M), m))
    return frame


def write_surfaces(surface: SolutionSurface, out_dir: Path, p: float, quantiles: Sequence[float],
                   per_path: bool = False) -> List[Path]:
    """写出 y_surface.csv、z_surface.csv，以及可选的 y_paths.csv"""
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = {
        "y_surface.csv": y_surface_frame(surface, p, quantiles),
        "z_surface.csv": z_surface_frame(surface),
    }
    if per_path:
        frames["y_paths.csv"] = y_paths_frame(surface)
    written = []
    for name, frame in frames.items():
        path = out_dir / name
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
        written.append(path)
        logger.info(f"曲面已写出: {path}")
    return written


def describe_ensemble(ensemble: PathEnsemble) -> str:
    seed = "" if ensemble.seed is None else f", seed={ensemble.seed}"
    return f"{ensemble.kind.value}(M={ensemble.paths}, N={ensemble.grid.steps}, d={ensemble.dim}{seed})"
