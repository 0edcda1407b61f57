"""
枚举树上的整体 Picard 求解器

不分区、不做 Fredholm 延拓：每次迭代对全部外层指标在整个 [0, T] 上做后向递推，
条件期望直接按前缀分组求平均。
"""

from typing import List

import numpy as np

from core.grid import PartitionPlan
from core.problem import ProblemSpec, SolveMode
from core.surfaces import (AdaptedProcess, EnsembleKind, PathEnsemble, SolutionSurface, SolveDiagnostics,
                           SubintervalReport, TwoParamField)
from solver.residuals import residual_summary
from utils.error_handler import ConvergenceError, EnumerationBoundError, ErrorCode, EstimatorError
from utils.logger import get_logger


logger = get_logger("tree")

TREE_BOUND = 12


def _prefix_mean(values: np.ndarray, step: int, dim: int) -> np.ndarray:
    """前 step 步相同的路径（编号连续的 2^{(N-step)·d} 条）取平均"""
    block = values.shape[0] >> (step * dim)
    sums = np.add.reduceat(values, np.arange(0, values.shape[0], block), axis=0)
    return np.repeat(sums / block, block, axis=0)


def _martingale(values: np.ndarray, dw: np.ndarray, step: int, h: float) -> np.ndarray:
    """(M, m) 与 (M, d) -> (M, m, d)"""
    product = values[:, :, None] * dw[:, None, :]
    return _prefix_mean(product, step, dw.shape[1]) / h


def exact_tree_solve(spec: ProblemSpec, ensemble: PathEnsemble, tol: float = 1e-10,
                     max_iter: int = 200) -> SolutionSurface:
    """
    精确树求解

    Args:
        spec: 问题定义
        ensemble: 枚举的 Bernoulli 路径集，N·d ≤ 12
        tol: 相邻迭代的最大绝对差阈值
        max_iter: 最多迭代次数

    Raises:
        EnumerationBoundError: N·d > 12
        ConvergenceError: 达到 max_iter 仍未收敛，附带 ρ 历史
    """
    if ensemble.kind is not EnsembleKind.BERNOULLI:
        raise EstimatorError("树求解只接受枚举的 Bernoulli 路径集", ErrorCode.ESTIMATOR_KIND)
    grid = ensemble.grid
    N, h, d = grid.steps, grid.h, ensemble.dim
    if N * d > TREE_BOUND:
        raise EnumerationBoundError(f"N·d = {N * d} > {TREE_BOUND}")

    m_solution = spec.mode is SolveMode.MSOLUTION
    M, m = ensemble.paths, spec.m
    w = ensemble.values
    dw = ensemble.increments
    psi = [spec.terminal_values(grid.t(i), ensemble.terminal) for i in range(N + 1)]

    y = np.zeros((M, N + 1, m))
    z = np.zeros((M, N + 1, N, m, d))
    distances: List[float] = []
    ratios: List[float] = []

    for k in range(max_iter):
        new_y = np.empty_like(y)
        new_z = np.zeros_like(z)
        for i in range(N + 1):
            lam = psi[i]
            for j in range(N - 1, i - 1, -1):
                z_ij = _martingale(lam, dw[:, j], j, h)
                zeta = z[:, j, i] if spec.uses_zeta else None
                lam = _prefix_mean(lam, j, d) + h * spec.generator_values(
                    grid.t(i), grid.t(j), y[:, j], z_ij, zeta, w[:, j])
                new_z[:, i, j] = z_ij
            new_y[:, i] = lam
            if m_solution:
                for j in range(i):
                    new_z[:, i, j] = _martingale(lam, dw[:, j], j, h)

        distance = max(float(np.max(np.abs(new_y - y))), float(np.max(np.abs(new_z - z))))
        y, z = new_y, new_z
        distances.append(distance)
        if k > 0:
            previous = distances[-2]
            ratios.append(distance / previous if previous > 0 else (0.0 if distance == 0 else float("inf")))
        if distance < tol or distance == 0.0:
            break
    else:
        raise ConvergenceError(f"树求解 {max_iter} 次迭代未收敛，最后距离 {distances[-1]:.3e}",
                               ratios=ratios, distances=distances)

    logger.debug(f"树求解收敛：{len(distances)} 次迭代")
    field = TwoParamField.from_array(z, has_m_block=m_solution).freeze()
    diagnostics = SolveDiagnostics(
        subintervals=[SubintervalReport(0, N, len(distances), distances, ratios, True)]
    )
    eq, m_worst, m_relative = residual_summary(spec, ensemble, y, field)
    diagnostics.equation_residual = eq
    diagnostics.m_identity_residual = m_worst
    diagnostics.m_identity_relative_l2 = m_relative
    plan = PartitionPlan(boundaries=(N, 0), eta=grid.horizon)
    return SolutionSurface(grid=grid, mode=spec.mode, y=AdaptedProcess(y), z=field,
                           plan=plan, diagnostics=diagnostics)
