"""
稳定性估计的经验探测

同一路径集上分别求解原问题与扰动问题 ψ + ε·δψ（可选 g + ε·δg），
比较解的差与输入的差。
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from core.problem import ProblemSpec
from core.surfaces import PathEnsemble, SolutionSurface, TwoParamField
from dsl.expression import Add, Expr, Mul, Num
from norms.norms import hp_norm
from solver.drivers import SolveOptions, solve
from stochastics.estimators import CondExpEstimator
from utils.logger import get_logger


logger = get_logger("stability")

Perturbation = Union[Expr, Sequence[Expr]]


@dataclass
class StabilityRow:
    """外层时间 t 处的稳定性估计：lhs ≤ Ĉ·rhs"""
    t: float
    lhs: float
    rhs: float
    ratio: Optional[float]


@dataclass
class StabilityReport:
    scale: float
    input_distance: float
    output_distance: float
    input_distance_double: float
    output_distance_double: float
    scaling_ratio: Optional[float]
    rows: List[StabilityRow] = field(default_factory=list)

    @property
    def c_hat(self) -> Optional[float]:
        ratios = [r.ratio for r in self.rows if r.ratio is not None]
        return max(ratios) if ratios else None


def _components(perturbation: Perturbation, m: int) -> List[Expr]:
    parts = [perturbation] if isinstance(perturbation, Expr) else list(perturbation)
    if len(parts) != m:
        raise ValueError(f"扰动需要 {m} 个分量，实际 {len(parts)} 个")
    return parts


def perturbed_problem(spec: ProblemSpec, scale: float, delta_psi: Sequence[Expr],
                      delta_g: Optional[Sequence[Expr]] = None) -> ProblemSpec:
    terminal = tuple(Add(psi, Mul(Num(float(scale)), dp)) for psi, dp in zip(spec.terminal, delta_psi))
    generator = spec.generator
    if delta_g is not None:
        generator = tuple(Add(g, Mul(Num(float(scale)), dg)) for g, dg in zip(spec.generator, delta_g))
    return replace(spec, terminal=terminal, generator=generator, name=f"{spec.name}+{scale!r}")


def _difference(a: SolutionSurface, b: SolutionSurface):
    dy = a.y.values - b.y.values
    dz = TwoParamField.from_array(a.z.values - b.z.values, a.z.has_m_block)
    return dy, dz


def _input_terms(spec: ProblemSpec, ensemble: PathEnsemble, scale: float, delta_psi: Sequence[Expr],
                 delta_g: Optional[Sequence[Expr]], base: SolutionSurface) -> np.ndarray:
    """每个外层指标的 E|εδψ(t_i)|^p + E(Σ_{j≥i} h|εδg_ij|)^p"""
    grid = ensemble.grid
    p = spec.p
    shift_psi = replace(spec, terminal=tuple(delta_psi))
    shift_g = replace(spec, generator=tuple(delta_g)) if delta_g is not None else None
    terms = np.zeros(grid.steps + 1)
    for i in range(grid.steps + 1):
        dpsi = scale * shift_psi.terminal_values(grid.t(i), ensemble.terminal)
        terms[i] = np.mean(np.sqrt(np.sum(dpsi ** 2, axis=-1)) ** p)
        if shift_g is None:
            continue
        total = np.zeros(ensemble.paths)
        for j in range(i, grid.steps):
            zeta = base.z.entry(j, i) if shift_g.uses_zeta else None
            dg = scale * shift_g.generator_values(grid.t(i), grid.t(j), base.y.at(j), base.z.entry(i, j),
                                                  zeta, ensemble.values[:, j])
            total += grid.h * np.sqrt(np.sum(dg ** 2, axis=-1))
        terms[i] += np.mean(total ** p)
    return terms


def _output_terms(spec: ProblemSpec, dy: np.ndarray, dz: TwoParamField, h: float) -> np.ndarray:
    """每个外层指标的 E|ΔY(t_i)|^p + E(Σ_j |ΔZ_ij|² h)^{p/2}，j 取模式允许的区域"""
    p = spec.p
    region = dz.region_mask()
    z_sq = np.sum(dz.values ** 2, axis=(-2, -1)) * region[None, :, :]
    quad = h * np.sum(z_sq, axis=2)
    y_part = np.mean(np.sqrt(np.sum(dy ** 2, axis=-1)) ** p, axis=0)
    return y_part + np.mean(quad ** (p / 2.0), axis=0)


def stability_probe(spec: ProblemSpec, delta_psi: Perturbation, scale: float, ensemble: PathEnsemble,
                    estimator: CondExpEstimator, tol: float = 1e-10, max_iter: int = 50,
                    options: Optional[SolveOptions] = None,
                    delta_g: Optional[Perturbation] = None) -> StabilityReport:
    """
    稳定性探测

    依次求解原问题、尺度 ε 与 2ε 的扰动问题；距离取 H^p 范数（p 次根）。
    对仿射问题，在 exact 估计器和公共随机数下 scaling_ratio 为 2。

    Args:
        delta_psi: 终端扰动（m 个分量）
        scale: 扰动尺度 ε
        delta_g: 可选的生成元扰动（m 个分量）
    """
    grid = ensemble.grid
    psi_parts = _components(delta_psi, spec.m)
    g_parts = _components(delta_g, spec.m) if delta_g is not None else None

    base = solve(spec, ensemble, estimator, tol, max_iter, options)
    single = solve(perturbed_problem(spec, scale, psi_parts, g_parts), ensemble, estimator, tol, max_iter, options)
    double = solve(perturbed_problem(spec, 2.0 * scale, psi_parts, g_parts), ensemble, estimator,
                   tol, max_iter, options)

    dy1, dz1 = _difference(single, base)
    dy2, dz2 = _difference(double, base)
    out1 = hp_norm(dy1, dz1, spec.p, grid).value
    out2 = hp_norm(dy2, dz2, spec.p, grid).value

    in1_terms = _input_terms(spec, ensemble, scale, psi_parts, g_parts, base)
    in2_terms = _input_terms(spec, ensemble, 2.0 * scale, psi_parts, g_parts, base)
    in1 = float(grid.h * np.sum(in1_terms[:-1])) ** (1.0 / spec.p)
    in2 = float(grid.h * np.sum(in2_terms[:-1])) ** (1.0 / spec.p)

    out_terms = _output_terms(spec, dy1, dz1, grid.h)
    rows = []
    for i in range(grid.steps + 1):
        lhs, rhs = float(out_terms[i]), float(in1_terms[i])
        if rhs > 0:
            ratio = lhs / rhs
        else:
            ratio = None if lhs == 0 else float("inf")
        rows.append(StabilityRow(t=grid.t(i), lhs=lhs, rhs=rhs, ratio=ratio))

    report = StabilityReport(
        scale=scale, input_distance=in1, output_distance=out1,
        input_distance_double=in2, output_distance_double=out2,
        scaling_ratio=out2 / out1 if out1 > 0 else None, rows=rows,
    )
    logger.info(f"稳定性探测: 输入 {in1:.4e}，输出 {out1:.4e}，Ĉ ≈ {report.c_hat}，倍数 {report.scaling_ratio}")
    return report
