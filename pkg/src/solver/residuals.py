"""
解曲面的残差诊断
"""

from typing import Optional, Tuple

import numpy as np

from core.problem import ProblemSpec
from core.surfaces import PathEnsemble, TwoParamField


def equation_residual(spec: ProblemSpec, ensemble: PathEnsemble, y: np.ndarray, z: TwoParamField) -> float:
    """
    离散方程残差

    R_i = Y_i − ψ(t_i) − Σ_{j≥i} h·g(t_i, t_j, Y_j, Z_ij, Z_ji) + Σ_{j≥i} Z_ij ΔW_j，
    返回所有路径与外层指标 i ∈ [0, N] 上的 max|R_i|。
    """
    grid = ensemble.grid
    N = grid.steps
    dw = ensemble.increments
    uses_zeta = spec.uses_zeta
    worst = 0.0
    for i in range(N + 1):
        residual = y[:, i] - spec.terminal_values(grid.t(i), ensemble.terminal)
        for j in range(i, N):
            z_ij = z.entry(i, j)
            zeta = z.entry(j, i) if uses_zeta else None
            drift = spec.generator_values(grid.t(i), grid.t(j), y[:, j], z_ij, zeta, ensemble.values[:, j])
            residual = residual - grid.h * drift + np.einsum("mkl,ml->mk", z_ij, dw[:, j])
        worst = max(worst, float(np.max(np.abs(residual))))
    return worst


def m_identity_residual(ensemble: PathEnsemble, y: np.ndarray, z: TwoParamField) -> Tuple[float, float]:
    """
    M-解恒等式 Y_i = E[Y_i] + Σ_{j<i} Z_ij ΔW_j 的残差

    Returns:
        (逐路径最大绝对残差, 相对 L² 残差)；相对值以 Y − E[Y] 的 L² 范数为分母
    """
    N = ensemble.grid.steps
    dw = ensemble.increments
    worst = 0.0
    residual_sq = 0.0
    centered_sq = 0.0
    for i in range(1, N + 1):
        centered = y[:, i] - y[:, i].mean(axis=0)
        martingale = np.einsum("mjkl,mjl->mk", z.row(i, 0, i), dw[:, :i])
        residual = centered - martingale
        worst = max(worst, float(np.max(np.abs(residual))))
        residual_sq += float(np.mean(np.sum(residual ** 2, axis=-1)))
        centered_sq += float(np.mean(np.sum(centered ** 2, axis=-1)))
    relative = np.sqrt(residual_sq / centered_sq) if centered_sq > 0 else np.sqrt(residual_sq)
    return worst, float(relative)


def residual_summary(spec: ProblemSpec, ensemble: PathEnsemble, y: np.ndarray,
                     z: TwoParamField) -> Tuple[float, Optional[float], Optional[float]]:
    """方程残差，以及有 M 块时的 M-解恒等式残差"""
    eq = equation_residual(spec, ensemble, y, z)
    if not z.has_m_block:
        return eq, None, None
    worst, relative = m_identity_residual(ensemble, y, z)
    return eq, worst, relative
